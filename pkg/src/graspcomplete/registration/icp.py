"""Point-to-point ICP with closed-form SVD updates."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator, TransformerMixin

from ..errors import DegenerateAlignmentError, GeometryError
from ..geometry.types import OrientedPointCloud, RigidTransform


@dataclass(frozen=True)
class IcpConfig:
    max_iterations: int = 50
    convergence_tol: float = 1e-6
    rejection_distance: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1 or not self.convergence_tol > 0 or not self.rejection_distance > 0:
            raise ValueError("ICP settings must be positive")


class IcpResult(NamedTuple):
    transform: RigidTransform
    rmse: float
    iterations: int


def kabsch(P, Q):
    """Least-squares rotation R and translation t with R @ p + t ~ q.

    Raises DegenerateAlignmentError when the cross-covariance has rank < 2
    (collinear or coincident correspondences leave the rotation undetermined).
    """
    P = np.asarray(P, float)
    Q = np.asarray(Q, float)
    if len(P) < 3:
        raise DegenerateAlignmentError()
    pc, qc = P.mean(axis=0), Q.mean(axis=0)
    H = (P - pc).T @ (Q - qc)
    U, s, Vt = np.linalg.svd(H)
    if s[0] <= 0 or np.sum(s > 1e-12 * s[0]) < 2:
        raise DegenerateAlignmentError()
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0])
    R = Vt.T @ D @ U.T
    return R, qc - R @ pc


def _truncated_rmse(d, tau):
    return float(np.sqrt(np.mean(np.minimum(d, tau) ** 2)))


def _points(c):
    return c.points if isinstance(c, OrientedPointCloud) else np.asarray(c, float).reshape(-1, 3)


def icp_align(source, target, init=None, config=IcpConfig(), history=None) -> IcpResult:
    """Transform mapping ``source`` into the frame of ``target``.

    The reported rmse is over all source points with each residual capped at
    the rejection distance; it never increases between iterations (an update
    that would raise it is discarded and the loop stops). ``history`` (a list)
    receives the rmse after the initial pose and after every iteration.
    """
    src = _points(source)
    tgt = _points(target)
    for pts in (src, tgt):
        if len(pts) < 3:
            raise GeometryError("ICP needs at least 3 points per cloud")
    T = init if init is not None else RigidTransform.identity()
    tau = config.rejection_distance
    tree = cKDTree(tgt)
    cur = T.apply(src)
    d, idx = tree.query(cur)
    rmse = _truncated_rmse(d, tau)
    if history is not None:
        history.append(rmse)
    it = 0
    for it in range(1, config.max_iterations + 1):
        keep = d <= tau
        if keep.sum() < 3:
            raise DegenerateAlignmentError()
        R, t = kabsch(cur[keep], tgt[idx[keep]])
        new = cur @ R.T + t
        d_new, idx_new = tree.query(new)
        rmse_new = _truncated_rmse(d_new, tau)
        if rmse_new > rmse:
            it -= 1
            break
        step = float(np.mean(np.linalg.norm(new - cur, axis=1)))
        T = RigidTransform.from_matrix(R, t) @ T
        cur, d, idx, rmse = new, d_new, idx_new, rmse_new
        if history is not None:
            history.append(rmse)
        if step < config.convergence_tol:
            break
    return IcpResult(T, rmse, max(it, 1))


def write_rmse_csv(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "rmse"])
        for i, r in enumerate(history):
            w.writerow([i, repr(float(r))])


class IcpRegistration(BaseEstimator, TransformerMixin):
    """``fit(source, target)`` estimates the pose; ``transform(X)`` applies it."""

    def __init__(self, max_iterations=50, convergence_tol=1e-6, rejection_distance=0.05, seed=0):
        self.max_iterations = max_iterations
        self.convergence_tol = convergence_tol
        self.rejection_distance = rejection_distance
        self.seed = seed

    def fit(self, X, y, init=None):
        cfg = IcpConfig(self.max_iterations, self.convergence_tol, self.rejection_distance, self.seed)
        self.history_ = []
        self.transform_, self.rmse_, self.n_iter_ = icp_align(X, y, init, cfg, self.history_)
        return self

    def transform(self, X):
        if isinstance(X, OrientedPointCloud):
            return X.transformed(self.transform_)
        return self.transform_.apply(np.asarray(X, float))
