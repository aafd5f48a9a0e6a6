from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


class SpatialIndex:
    """Immutable k-d tree over a point set.

    Nearest-neighbor ties resolve to the lowest point index.
    """

    def __init__(self, points):
        self.points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        self._tree = cKDTree(self.points)

    def __len__(self):
        return len(self.points)

    def query(self, queries, k=1):
        return self._tree.query(np.asarray(queries, float), k=k)

    def nearest(self, queries):
        """(distance, index) of the nearest indexed point for every query."""
        q = np.asarray(queries, float).reshape(-1, 3)
        kk = min(4, len(self.points))
        d, idx = self._tree.query(q, k=kk)
        if kk == 1:
            return d, idx
        tied = d <= d[:, :1]
        masked = np.where(tied, idx, np.iinfo(np.int64).max)
        j = np.argmin(masked, axis=1)
        rows = np.arange(len(q))
        return d[rows, j], idx[rows, j]

    def within(self, queries, r):
        """True where a query lies within distance r of some indexed point."""
        d, _ = self._tree.query(np.asarray(queries, float).reshape(-1, 3), k=1)
        return d <= r
