"""Reconstruction and grasping metrics, plus an exact signed-rank test."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..errors import GeometryError, InsufficientPairsError
from ..geometry.sampling import sample_surface, voxelize
from ..geometry.types import OrientedPointCloud, TriMesh, VoxelGrid

F1_RADIUS = 0.01
VOXEL_DIMS = 40


def _pts(c):
    if isinstance(c, OrientedPointCloud):
        return c.points
    return np.asarray(c, float).reshape(-1, 3)


def directed_distances(a, b):
    """For every point of a, the distance to its nearest point of b."""
    return cKDTree(b).query(a)[0]


def _nonempty(*clouds):
    out = [_pts(c) for c in clouds]
    if any(len(c) == 0 for c in out):
        raise GeometryError("empty cloud")
    return out


def chamfer(s1, s2):
    """Sum of the two directed mean nearest-neighbour distances."""
    a, b = _nonempty(s1, s2)
    return float(directed_distances(a, b).mean() + directed_distances(b, a).mean())


def hausdorff(s1, s2):
    a, b = _nonempty(s1, s2)
    return float(max(directed_distances(a, b).max(), directed_distances(b, a).max()))


def jaccard(a: VoxelGrid, b: VoxelGrid, return_flag=False):
    """Intersection over union of two occupancies on the same grid.

    Two empty grids give 1.0; ``return_flag`` also reports that case.
    """
    if not a.same_grid(b):
        raise GeometryError("voxel grids differ")
    union = int(np.count_nonzero(a.occupancy | b.occupancy))
    inter = int(np.count_nonzero(a.occupancy & b.occupancy))
    both_empty = union == 0
    j = 1.0 if both_empty else inter / union
    return (j, both_empty) if return_flag else j


def common_grid_bounds(m1: TriMesh, m2: TriMesh):
    lo = np.minimum(m1.bounds[0], m2.bounds[0])
    hi = np.maximum(m1.bounds[1], m2.bounds[1])
    return lo, hi


def mesh_jaccard(m1: TriMesh, m2: TriMesh, dims=VOXEL_DIMS):
    """Jaccard similarity on a dims^3 grid spanning the union bounding box."""
    bounds = common_grid_bounds(m1, m2)
    return jaccard(voxelize(m1, dims, bounds), voxelize(m2, dims, bounds))


def precision_recall_f1(pred, gt, r=F1_RADIUS):
    if not r > 0:
        raise ValueError("radius must be positive")
    p = _pts(pred)
    g = _pts(gt)
    if len(g) == 0:
        raise GeometryError("empty ground truth")
    if len(p) == 0:
        return 0.0, 0.0, 0.0
    P = float(np.mean(directed_distances(p, g) <= r))
    R = float(np.mean(directed_distances(g, p) <= r))
    F = 2 * P * R / (P + R) if P + R > 0 else 0.0
    return P, R, F


def gsr(outcomes):
    o = np.asarray(list(outcomes), dtype=bool)
    if o.size == 0:
        raise ValueError("no grasp attempts")
    return float(o.mean())


def _signed_ranks(a, b):
    d = np.asarray(a, float) - np.asarray(b, float)
    if d.shape != np.asarray(b, float).shape:
        raise ValueError("a and b differ in length")
    d = d[d != 0]
    if len(d) < 5:
        raise InsufficientPairsError()
    mag = np.abs(d)
    order = np.argsort(mag, kind="stable")
    ranks = np.empty(len(d))
    sorted_mag = mag[order]
    i = 0
    while i < len(d):
        j = i
        while j + 1 < len(d) and sorted_mag[j + 1] == sorted_mag[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return d, ranks


def wilcoxon_signed_rank(a, b, return_statistic=False):
    """Two-sided exact p of the signed-rank statistic.

    Zero differences are dropped, tied magnitudes get average ranks, and the
    null distribution over all 2^n sign patterns is built by dynamic
    programming on doubled (hence integer) ranks.
    """
    d, ranks = _signed_ranks(a, b)
    r2 = np.rint(2 * ranks).astype(np.int64)
    total = int(r2.sum())
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in r2:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    w_plus = int(r2[d > 0].sum())
    n_all = 2 ** len(d)
    lower = sum(counts[: w_plus + 1])
    upper = sum(counts[w_plus:])
    p = min(1.0, 2 * float(min(lower, upper)) / n_all)
    return (p, w_plus / 2) if return_statistic else p


@dataclass(frozen=True)
class MetricsReport:
    chamfer: float
    hausdorff: float
    jaccard: float
    precision: float
    recall: float
    f1: float
    radius_r: float = F1_RADIUS
    voxel_dims: int = VOXEL_DIMS

    def as_dict(self):
        return asdict(self)


def evaluate_meshes(pred: TriMesh, gt: TriMesh, n_points=5000, r=F1_RADIUS, voxel_dims=VOXEL_DIMS, seed=0):
    """All shape metrics between a reconstruction and the ground truth (same frame)."""
    ps = sample_surface(pred, n_points, seed=seed).points
    gs = sample_surface(gt, n_points, seed=seed + 1).points
    P, R, F = precision_recall_f1(ps, gs, r)
    return MetricsReport(
        chamfer(ps, gs), hausdorff(ps, gs), mesh_jaccard(pred, gt, voxel_dims), P, R, F, r, voxel_dims
    )


REPORT_FIELDS = ["chamfer", "hausdorff", "jaccard", "precision", "recall", "f1"]


def write_rows_csv(rows, path, fields=None):
    """One row per dict; columns are the union of keys in first-seen order."""
    if fields is None:
        fields = []
        for r in rows:
            fields += [k for k in r if k not in fields]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def aggregate(rows, metrics=REPORT_FIELDS, by="variant", unit="object"):
    """Mean and std per group, averaged over per-``unit`` means first."""
    out = {}
    for g in sorted({r[by] for r in rows}, key=str):
        grp = [r for r in rows if r[by] == g]
        units = sorted({r[unit] for r in grp}, key=str)
        entry = {"n_rows": len(grp), "n_" + unit + "s": len(units)}
        for m in metrics:
            vals = [r[m] for r in grp if r.get(m) is not None and np.isfinite(r[m])]
            if not vals:
                continue
            per = [np.mean([r[m] for r in grp if r[unit] == u and r.get(m) is not None]) for u in units]
            per = [v for v in per if np.isfinite(v)]
            stds = [np.std([r[m] for r in grp if r[unit] == u and r.get(m) is not None]) for u in units]
            entry[m] = {"mean": float(np.mean(per)), "std": float(np.mean(stds))}
        out[str(g)] = entry
    return out


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
