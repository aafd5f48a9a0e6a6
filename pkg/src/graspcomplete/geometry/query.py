"""Distance, inside/outside and signed-distance queries on triangle meshes."""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..errors import GeometryError
from .raycast import ParallelRayCaster

# fixed, non-axis-aligned parity ray directions; retried on grazing hits
PARITY_DIRECTIONS = (
    (0.0137, 0.0291, 1.0),
    (0.7071, -0.0453, 0.7016),
    (-0.3127, 0.9411, 0.1288),
)

_BRUTE_FACES = 64
_CHUNK = 1 << 20


def closest_point_on_triangles(p, a, b, c):
    """Closest points on triangles (a, b, c) to p, all arrays (n, 3)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    out = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    def put(mask, value):
        m = mask & ~done
        out[m] = value[m] if np.ndim(value) == 2 else value
        done[m] = True

    put((d1 <= 0) & (d2 <= 0), a)
    put((d3 >= 0) & (d4 <= d3), b)
    denom = np.where(d1 - d3 != 0, d1 - d3, 1.0)
    put((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + (d1 / denom)[:, None] * ab)
    put((d6 >= 0) & (d5 <= d6), c)
    denom = np.where(d2 - d6 != 0, d2 - d6, 1.0)
    put((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + (d2 / denom)[:, None] * ac)
    e43 = d4 - d3
    e56 = d5 - d6
    denom = np.where(e43 + e56 != 0, e43 + e56, 1.0)
    put((va <= 0) & (e43 >= 0) & (e56 >= 0), b + (e43 / denom)[:, None] * (c - b))
    total = va + vb + vc
    total = np.where(total != 0, total, 1.0)
    v = vb / total
    w = vc / total
    put(np.ones(len(p), dtype=bool), a + v[:, None] * ab + w[:, None] * ac)
    return out


class MeshQuery:
    """Cached acceleration structures for one mesh."""

    def __init__(self, mesh):
        if mesh.is_empty:
            raise GeometryError("empty mesh")
        self.mesh = mesh
        tri = mesh.triangles
        self._tri = tri
        self._centroids = tri.mean(axis=1)
        self._radius = float(np.max(np.linalg.norm(tri - self._centroids[:, None], axis=2)))
        self._tree = cKDTree(self._centroids) if len(tri) > _BRUTE_FACES else None
        self._casters = {}

    def caster(self, direction):
        key = tuple(np.round(np.asarray(direction, float), 12))
        if key not in self._casters:
            self._casters[key] = ParallelRayCaster(self._tri, direction)
        return self._casters[key]

    def _brute(self, P, faces=None):
        tri = self._tri if faces is None else self._tri[faces]
        nf = len(tri)
        best_d = np.full(len(P), np.inf)
        best_f = np.zeros(len(P), dtype=np.int64)
        best_c = np.zeros_like(P)
        step = max(1, _CHUNK // max(nf, 1))
        for s in range(0, len(P), step):
            q = P[s : s + step]
            qq = np.repeat(q, nf, axis=0)
            tt = np.tile(tri, (len(q), 1, 1))
            c = closest_point_on_triangles(qq, tt[:, 0], tt[:, 1], tt[:, 2])
            d = np.linalg.norm(c - qq, axis=1).reshape(len(q), nf)
            j = np.argmin(d, axis=1)
            rows = np.arange(len(q))
            best_d[s : s + step] = d[rows, j]
            best_f[s : s + step] = j
            best_c[s : s + step] = c.reshape(len(q), nf, 3)[rows, j]
        if faces is not None:
            best_f = np.asarray(faces)[best_f]
        return best_d, best_f, best_c

    def closest(self, points, max_distance=np.inf):
        """Unsigned distance, closest face index and closest point.

        Results are exact for every point closer than ``max_distance``; farther
        points only get an upper-bound candidate that is itself >= max_distance.
        """
        P = np.asarray(points, float).reshape(-1, 3)
        n = len(P)
        best_d = np.full(n, np.inf)
        best_f = np.zeros(n, dtype=np.int64)
        best_c = np.zeros((n, 3))
        if n == 0:
            return best_d, best_f, best_c
        if self._tree is None:
            return self._brute(P)
        todo = np.arange(n)
        nf = len(self._tri)
        for k in (16, 128, nf):
            k = min(k, nf)
            if k == nf:
                d, f, c = self._brute(P[todo])
                best_d[todo], best_f[todo], best_c[todo] = d, f, c
                break
            dc, idx = self._tree.query(P[todo], k=k)
            tri = self._tri[idx.ravel()]
            qq = np.repeat(P[todo], k, axis=0)
            c = closest_point_on_triangles(qq, tri[:, 0], tri[:, 1], tri[:, 2])
            d = np.linalg.norm(c - qq, axis=1).reshape(len(todo), k)
            j = np.argmin(d, axis=1)
            rows = np.arange(len(todo))
            best_d[todo] = d[rows, j]
            best_f[todo] = idx[rows, j]
            best_c[todo] = c.reshape(len(todo), k, 3)[rows, j]
            # faces outside the k nearest centroids are at least this far away
            bound = dc[:, -1] - self._radius
            settled = (best_d[todo] <= bound) | ((bound >= max_distance) & (best_d[todo] >= max_distance))
            todo = todo[~settled]
            if len(todo) == 0:
                break
        return best_d, best_f, best_c

    def unsigned_distance(self, points, max_distance=np.inf):
        return self.closest(points, max_distance)[0]

    def contains(self, points):
        """Ray-parity inside test; retried along other directions on grazing hits."""
        self.mesh.require_watertight()
        P = np.asarray(points, float).reshape(-1, 3)
        result = np.zeros(len(P), dtype=bool)
        todo = np.arange(len(P))
        votes = np.zeros(len(P), dtype=int)
        for attempt, d in enumerate(PARITY_DIRECTIONS):
            if len(todo) == 0:
                break
            inside, ambiguous = self.caster(d).crossing_parity(P[todo])
            votes[todo] += inside.astype(int)
            settled = ~ambiguous
            if attempt == len(PARITY_DIRECTIONS) - 1:
                # still grazing after all retries: majority of the three votes
                result[todo[~settled]] = votes[todo[~settled]] >= 2
            result[todo[settled]] = inside[settled]
            todo = todo[~settled]
        return result

    def signed_distance(self, points, surface_tol=1e-12, max_distance=np.inf):
        """Negative inside; exactly 0 within ``surface_tol`` of the surface.

        Magnitudes beyond ``max_distance`` are only guaranteed to exceed it.
        """
        P = np.asarray(points, float).reshape(-1, 3)
        d = self.unsigned_distance(P, max_distance)
        on = d <= surface_tol
        sign = np.ones(len(P))
        off = np.flatnonzero(~on)
        if len(off):
            sign[off] = np.where(self.contains(P[off]), -1.0, 1.0)
        return np.where(on, 0.0, sign * d)

    def first_hit(self, origins, direction, t_max=np.inf):
        return self.caster(direction).first_hit(origins, t_max=t_max)
