from __future__ import annotations

import numpy as np

from ..errors import GeometryError
from .spatial import SpatialIndex
from .types import OrientedPointCloud, TriMesh, VoxelGrid


def _face_counts(areas, n, rng):
    """Stratified allocation: floor of the expected count per face, remainder
    drawn without replacement in proportion to the fractional parts."""
    expected = n * areas / areas.sum()
    counts = np.floor(expected).astype(np.int64)
    rem = n - int(counts.sum())
    if rem > 0:
        frac = expected - counts
        if frac.sum() <= 0:
            frac = areas.copy()
        extra = rng.choice(len(areas), size=rem, replace=False, p=frac / frac.sum())
        counts[extra] += 1
    return counts


def sample_surface(mesh: TriMesh, n: int, seed: int = 0, label="visual") -> OrientedPointCloud:
    """Area-uniform surface samples carrying the normal of their source face."""
    if mesh.is_empty:
        raise GeometryError("empty mesh")
    if n < 1:
        raise GeometryError("n must be >= 1")
    rng = np.random.default_rng(seed)
    counts = _face_counts(mesh.face_areas, n, rng)
    face = np.repeat(np.arange(len(mesh.faces)), counts)
    face = face[rng.permutation(len(face))]
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    tri = mesh.triangles[face]
    pts = (
        (1.0 - r1)[:, None] * tri[:, 0]
        + (r1 * (1.0 - r2))[:, None] * tri[:, 1]
        + (r1 * r2)[:, None] * tri[:, 2]
    )
    return OrientedPointCloud(pts, mesh.face_normals[face], label)


def estimate_normals(cloud, k: int = 16, viewpoint=(0.0, 0.0, 0.0)) -> OrientedPointCloud:
    """PCA normals over k-point neighborhoods (the point itself included),
    flipped to face ``viewpoint``."""
    if k < 3:
        raise GeometryError("k must be >= 3")
    points = cloud.points if isinstance(cloud, OrientedPointCloud) else np.asarray(cloud, float)
    labels = cloud.labels if isinstance(cloud, OrientedPointCloud) else None
    if len(points) < k:
        raise GeometryError(f"need at least {k} points for k={k}, got {len(points)}")
    _, idx = SpatialIndex(points).query(points, k=k)
    nb = points[idx]
    centered = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    to_view = np.asarray(viewpoint, float) - points
    flip = np.einsum("ij,ij->i", normals, to_view) < 0
    normals[flip] *= -1.0
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return OrientedPointCloud(points, normals, labels)


def voxelize(mesh: TriMesh, dims, bounds) -> VoxelGrid:
    """Occupancy of voxel centers by ray-parity inside test.

    Voxels are cubic: the edge is the largest per-axis extent / dims and the
    grid is centered on ``bounds``.
    """
    mesh.require_watertight()
    dims = tuple(int(d) for d in np.broadcast_to(dims, (3,)))
    if min(dims) < 1:
        raise GeometryError("dims must be >= 1")
    lo, hi = np.asarray(bounds, float)
    ext = hi - lo
    if np.any(ext <= 0):
        raise GeometryError("degenerate bounds")
    size = float(np.max(ext / np.array(dims)))
    origin = (lo + hi) / 2.0 - size * np.array(dims) / 2.0
    centers = VoxelGrid.centers_for(origin, size, dims)
    occ = np.zeros(len(centers), dtype=bool)
    mlo, mhi = mesh.bounds
    near = np.all((centers >= mlo) & (centers <= mhi), axis=1)
    if near.any():
        occ[near] = mesh.query.contains(centers[near])
    return VoxelGrid(origin, size, dims, occ)
