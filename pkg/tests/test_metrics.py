import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from graspcomplete.errors import InsufficientPairsError
from graspcomplete.geometry.primitives import box
from graspcomplete.geometry.sampling import voxelize
from graspcomplete.geometry.types import VoxelGrid
from graspcomplete.metrics import (
    aggregate,
    chamfer,
    evaluate_meshes,
    gsr,
    hausdorff,
    jaccard,
    mesh_jaccard,
    precision_recall_f1,
    wilcoxon_signed_rank,
)


def brute_dists(a, b):
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    return d.min(axis=1)


def brute_chamfer(a, b):
    return brute_dists(a, b).mean() + brute_dists(b, a).mean()


def brute_hausdorff(a, b):
    return max(brute_dists(a, b).max(), brute_dists(b, a).max())


def brute_wilcoxon(a, b):
    """Enumerate all 2^n sign flips of the ranked non-zero differences."""
    d = np.asarray(a, float) - np.asarray(b, float)
    d = d[d != 0]
    ranks = stats.rankdata(np.abs(d))
    w_obs = ranks[d > 0].sum()
    n = len(d)
    lo = hi = 0
    for signs in itertools.product((0, 1), repeat=n):
        w = float(np.dot(signs, ranks))
        lo += w <= w_obs + 1e-9
        hi += w >= w_obs - 1e-9
    return min(1.0, 2 * min(lo, hi) / 2**n)


def test_chamfer_examples():
    p = np.random.default_rng(0).normal(size=(30, 3))
    assert chamfer(p, p) == 0.0
    assert chamfer(np.zeros((1, 3)), np.array([[1.0, 0, 0]])) == 2.0


def test_hausdorff_examples():
    p = np.random.default_rng(1).normal(size=(30, 3))
    assert hausdorff(p, p) == 0.0
    assert hausdorff(np.array([[0.0, 0, 0], [1, 0, 0]]), np.zeros((1, 3))) == 1.0


@given(st.integers(1, 200), st.integers(1, 200), st.integers(0, 2**31))
def test_point_metrics_match_brute_force(n, m, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(n, 3)), rng.normal(size=(m, 3))
    assert abs(chamfer(a, b) - brute_chamfer(a, b)) <= 1e-12
    assert abs(hausdorff(a, b) - brute_hausdorff(a, b)) <= 1e-12


def test_precision_recall_examples():
    gt = np.random.default_rng(2).uniform(size=(100, 3))
    assert precision_recall_f1(gt, gt, 0.01) == (1.0, 1.0, 1.0)
    assert precision_recall_f1(np.zeros((0, 3)), gt, 0.01) == (0.0, 0.0, 0.0)
    far = gt + 10.0
    P, R, F = precision_recall_f1(np.concatenate([gt, far]), gt, 0.01)
    assert P == 0.5 and R == 1.0 and abs(F - 2 / 3) < 1e-12


def grid(occ):
    return VoxelGrid(np.zeros(3), 0.1, occ.shape, occ)


def test_jaccard_examples():
    a = grid(np.zeros((4, 4, 4), bool))
    occ = np.zeros((4, 4, 4), bool)
    occ[:2] = True
    g = grid(occ)
    assert jaccard(g, g) == 1.0
    other = grid(~occ)
    assert jaccard(g, other) == 0.0
    assert jaccard(a, a) == 1.0


def test_jaccard_half_overlapping_cubes():
    c1 = box(1.0, 1.0, 1.0)
    c2 = box(1.0, 1.0, 1.0, center=(0.5, 0.0, 0.0))
    assert abs(mesh_jaccard(c1, c2, 20) - 1 / 3) <= 0.04


def test_jaccard_matches_brute_count():
    rng = np.random.default_rng(5)
    for _ in range(20):
        a = rng.uniform(size=(6, 5, 4)) < 0.4
        b = rng.uniform(size=(6, 5, 4)) < 0.6
        ga, gb = grid(a), grid(b)
        inter = sum(1 for idx in np.ndindex(a.shape) if a[idx] and b[idx])
        union = sum(1 for idx in np.ndindex(a.shape) if a[idx] or b[idx])
        assert jaccard(ga, gb) == inter / union


def test_voxelize_cube_and_sphere(unit_cube, unit_sphere):
    lo, hi = np.full(3, -0.5), np.full(3, 0.5)
    assert voxelize(unit_cube, (4, 4, 4), (lo, hi)).count == 64
    assert voxelize(unit_cube, (4, 4, 4), (lo + 5, hi + 5)).count == 0
    g = voxelize(unit_sphere, (20, 20, 20), (np.full(3, -1.0), np.full(3, 1.0)))
    assert abs(g.count / 8000 - np.pi / 6) <= 0.05 * np.pi / 6


def test_gsr():
    assert gsr([True] * 8 + [False] * 2) == 0.8
    assert gsr([False] * 4) == 0.0


def test_wilcoxon_examples():
    a = np.arange(1, 11, dtype=float)
    with pytest.raises(InsufficientPairsError, match="insufficient pairs"):
        wilcoxon_signed_rank(a, a)
    p = wilcoxon_signed_rank(a + np.arange(1, 11) * 0.1, a)
    assert p == 2 / 2**10


@pytest.mark.parametrize("seed", range(30))
def test_wilcoxon_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 13))
    a = rng.normal(size=n)
    b = a + rng.normal(0.2, 1.0, size=n)
    if seed % 3 == 0:
        # ties and zeros
        b = np.round(b, 0)
        a = np.round(a, 0)
    if np.count_nonzero(a - b) < 5:
        pytest.skip("too many zero differences")
    assert wilcoxon_signed_rank(a, b) == pytest.approx(brute_wilcoxon(a, b), abs=1e-15)


def test_wilcoxon_matches_scipy_without_ties():
    rng = np.random.default_rng(9)
    a, b = rng.normal(size=12), rng.normal(size=12)
    ref = stats.wilcoxon(a, b, method="exact").pvalue
    assert wilcoxon_signed_rank(a, b) == pytest.approx(ref, rel=1e-12)


def test_evaluate_identical_meshes(unit_cube):
    m = evaluate_meshes(unit_cube, unit_cube, 2000, r=0.1)
    assert m.jaccard == 1.0 and m.f1 > 0.99 and m.chamfer < 0.08


def test_aggregate_per_object_first():
    rows = [
        {"variant": "a", "object": "x", "chamfer": 1.0},
        {"variant": "a", "object": "x", "chamfer": 3.0},
        {"variant": "a", "object": "y", "chamfer": 10.0},
    ]
    out = aggregate(rows, ["chamfer"])
    # per-object means 2 and 10, then averaged
    assert out["a"]["chamfer"]["mean"] == 6.0
    assert out["a"]["chamfer"]["std"] == 0.5
