"""Vectorized ray/triangle intersection with 2D bucket acceleration."""
from __future__ import annotations

import numpy as np

# relative tolerance for a ray grazing a triangle edge or vertex
EDGE_EPS = 1e-9


def ray_triangle(origins, dirs, a, b, c):
    """Moller-Trumbore on paired arrays; returns (t, u, v, valid).

    ``valid`` is False for rays parallel to the triangle plane. Hits are
    inside when u >= 0, v >= 0, u + v <= 1.
    """
    e1 = b - a
    e2 = c - a
    pvec = np.cross(dirs, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    scale = np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)
    valid = np.abs(det) > 1e-14 * np.maximum(scale, 1e-300)
    inv = np.where(valid, 1.0 / np.where(valid, det, 1.0), 0.0)
    tvec = origins - a
    u = np.einsum("ij,ij->i", tvec, pvec) * inv
    qvec = np.cross(tvec, e1)
    v = np.einsum("ij,ij->i", dirs, qvec) * inv
    t = np.einsum("ij,ij->i", e2, qvec) * inv
    return t, u, v, valid


def _expand_ranges(i0, i1, j0, j1):
    """Enumerate every integer cell (i, j) in per-item rectangles."""
    ni = i1 - i0 + 1
    nj = j1 - j0 + 1
    counts = ni * nj
    item = np.repeat(np.arange(len(i0)), counts)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    local = np.arange(int(counts.sum())) - np.repeat(starts, counts)
    ii = i0[item] + local // nj[item]
    jj = j0[item] + local % nj[item]
    return item, ii, jj


def orthonormal_basis(d):
    d = np.asarray(d, float)
    d = d / np.linalg.norm(d)
    helper = np.array([1.0, 0.0, 0.0]) if abs(d[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(d, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(d, e1)
    return d, e1, e2


class ParallelRayCaster:
    """Casts many rays sharing one direction against a fixed triangle set.

    Triangles are projected onto the plane orthogonal to the direction and
    bucketed into a uniform grid, so each ray only tests triangles whose
    projected bounding box covers its cell.
    """

    def __init__(self, triangles, direction, max_cells=256):
        self.triangles = np.asarray(triangles, float)
        self.direction, self.e1, self.e2 = orthonormal_basis(direction)
        basis = np.stack([self.e1, self.e2], axis=1)
        uv = self.triangles @ basis  # (m, 3, 2)
        lo = uv.min(axis=1)
        hi = uv.max(axis=1)
        self.lo = lo.min(axis=0) if len(uv) else np.zeros(2)
        extent = (hi.max(axis=0) - self.lo) if len(uv) else np.ones(2)
        span = np.max(hi - lo, axis=1) if len(uv) else np.ones(1)
        h = float(np.median(span)) if len(span) else 1.0
        h = max(h, float(extent.max()) / max_cells, 1e-12)
        self.h = h
        self.shape = np.maximum(np.ceil(extent / h).astype(int) + 1, 1)
        if len(uv) == 0:
            self.offsets = np.zeros(1, dtype=np.int64)
            self.cell_faces = np.zeros(0, dtype=np.int64)
            return
        i0, j0 = np.floor((lo - self.lo) / h).astype(int).T
        i1, j1 = np.floor((hi - self.lo) / h).astype(int).T
        item, ii, jj = _expand_ranges(i0, i1, j0, j1)
        cell = ii * self.shape[1] + jj
        order = np.argsort(cell, kind="stable")
        ncell = int(self.shape[0] * self.shape[1])
        self.cell_faces = item[order]
        self.offsets = np.searchsorted(cell[order], np.arange(ncell + 1))

    def _pairs(self, origins):
        basis = np.stack([self.e1, self.e2], axis=1)
        uv = origins @ basis
        ij = np.floor((uv - self.lo) / self.h).astype(np.int64)
        inside = np.all((ij >= 0) & (ij < self.shape), axis=1)
        cell = np.where(inside, ij[:, 0] * self.shape[1] + ij[:, 1], 0)
        start = self.offsets[cell]
        count = np.where(inside, self.offsets[cell + 1] - start, 0)
        ray = np.repeat(np.arange(len(origins)), count)
        base = np.concatenate([[0], np.cumsum(count)[:-1]]) if len(count) else np.zeros(0, int)
        local = np.arange(int(count.sum())) - np.repeat(base, count)
        face = self.cell_faces[np.repeat(start, count) + local]
        return ray, face

    def intersect(self, origins):
        """All ray/triangle hits as (ray index, face index, t, grazing flag)."""
        origins = np.asarray(origins, float).reshape(-1, 3)
        ray, face = self._pairs(origins)
        if len(ray) == 0:
            z = np.zeros(0)
            return ray, face, z, z.astype(bool)
        tri = self.triangles[face]
        dirs = np.broadcast_to(self.direction, (len(ray), 3))
        t, u, v, valid = ray_triangle(origins[ray], dirs, tri[:, 0], tri[:, 1], tri[:, 2])
        w = 1.0 - u - v
        hit = valid & (u >= -EDGE_EPS) & (v >= -EDGE_EPS) & (w >= -EDGE_EPS)
        graze = hit & ((np.abs(u) <= EDGE_EPS) | (np.abs(v) <= EDGE_EPS) | (np.abs(w) <= EDGE_EPS))
        return ray[hit], face[hit], t[hit], graze[hit]

    def first_hit(self, origins, t_max=np.inf, t_min=0.0):
        """Nearest hit per ray within [t_min, t_max]; inf / -1 when none."""
        origins = np.asarray(origins, float).reshape(-1, 3)
        ray, face, t, _ = self.intersect(origins)
        keep = (t >= t_min) & (t <= t_max)
        ray, face, t = ray[keep], face[keep], t[keep]
        best_t = np.full(len(origins), np.inf)
        best_f = np.full(len(origins), -1, dtype=np.int64)
        if len(ray):
            order = np.lexsort((face, t, ray))
            ray, face, t = ray[order], face[order], t[order]
            first = np.concatenate([[True], ray[1:] != ray[:-1]])
            best_t[ray[first]] = t[first]
            best_f[ray[first]] = face[first]
        return best_t, best_f

    def crossing_parity(self, origins, surface_tol=1e-12):
        """Odd/even count of forward hits and an ambiguity flag per ray."""
        origins = np.asarray(origins, float).reshape(-1, 3)
        ray, face, t, graze = self.intersect(origins)
        fwd = t > surface_tol
        counts = np.bincount(ray[fwd], minlength=len(origins))
        bad = graze & (t > -surface_tol)
        bad |= np.abs(t) <= surface_tol
        ambiguous = np.bincount(ray[bad], minlength=len(origins)) > 0
        return counts % 2 == 1, ambiguous
