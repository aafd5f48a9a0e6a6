from __future__ import annotations

import numpy as np
from skimage.measure import marching_cubes

from ..errors import NoSurfaceError
from .types import TriMesh

# grid values closer to zero than this fraction of a cell are pushed away so
# that interpolated vertices never coincide with grid corners
ZERO_NUDGE = 0.01


def grid_axes(lo, hi, resolution):
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    return [np.linspace(lo[i], hi[i], resolution) for i in range(3)]


def contour_grid(values, lo, hi):
    """Zero level set of a sampled field (negative inside) as an outward-wound mesh.

    The outermost grid layer is forced positive, so the result is closed even
    when the surface reaches the box; the second return value reports that case.
    """
    v = np.array(values, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite field values")
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    spacing = (hi - lo) / (np.array(v.shape) - 1)
    tau = ZERO_NUDGE * float(spacing.min())
    v = np.where(np.abs(v) < tau, np.where(v < 0, -tau, tau), v)
    shell = np.ones(v.shape, dtype=bool)
    shell[1:-1, 1:-1, 1:-1] = False
    touches = bool(np.any(v[shell] < 0))
    v[shell] = np.maximum(v[shell], tau)
    if not np.any(v < 0):
        raise NoSurfaceError()
    verts, faces, _, _ = marching_cubes(v, 0.0, spacing=tuple(spacing), method="lewiner", allow_degenerate=False)
    verts = verts + lo
    verts, faces = _merge_duplicates(verts, faces)
    return TriMesh(verts, faces), touches


def _merge_duplicates(verts, faces, tol=1e-9):
    key = np.round(verts / tol).astype(np.int64)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    if len(first) == len(verts):
        return verts, faces
    faces = inverse[faces]
    keep = (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])
    return verts[first], faces[keep]


def contour_function(fn, lo, hi, resolution, chunk=65536):
    """Evaluate ``fn`` on a resolution^3 lattice spanning [lo, hi] and contour it."""
    axes = grid_axes(lo, hi, resolution)
    g = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([a.ravel() for a in g], axis=1)
    vals = np.concatenate([np.asarray(fn(pts[i : i + chunk]), float) for i in range(0, len(pts), chunk)])
    return contour_grid(vals.reshape((resolution,) * 3), lo, hi)
