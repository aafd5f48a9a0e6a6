"""Candidate sampling, evaluation and ranking."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator

from ..errors import NoCandidatesError
from ..geometry.sampling import sample_surface
from ..geometry.types import TriMesh
from .gripper import resolve_gripper
from .simulate import EPS, GraspPose, ObjectProps, compute_orientation, compute_quality, simulate_grasp

DISTANCES = (0.10, 0.11, 0.12)


@dataclass(frozen=True)
class PlannerConfig:
    sample_count: int = 50
    distances: tuple = DISTANCES
    seed: int = 0
    use_top_term: bool = True
    # None: the ground is the lowest point of the mesh (object resting on a table)
    ground_z: float | None = None
    check_ground: bool = True

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        if not self.distances or min(self.distances) <= 0:
            raise ValueError("distances must be positive")


@dataclass(frozen=True, eq=False)
class GraspCandidate:
    sample_id: int
    pose: GraspPose
    quality: float
    result: object

    @property
    def position(self):
        return self.pose.position

    @property
    def orientation(self):
        return self.pose.orientation

    @property
    def distance(self):
        return self.pose.distance

    @property
    def components(self):
        return self.result.components

    @property
    def success(self):
        return self.result.success

    @property
    def pruned(self):
        return self.result.collided


def candidate_poses(mesh, location, gripper, config):
    placed = mesh.translated(location) if np.any(np.asarray(location, float) != 0) else mesh
    samples = sample_surface(placed, config.sample_count, seed=config.seed)
    poses = []
    for i, (s, n) in enumerate(zip(samples.points, samples.normals)):
        o = compute_orientation(n, gripper.approach_axis)
        for d in config.distances:
            poses.append((i, GraspPose(s + d * n, o, float(d))))
    return placed, poses


def _evaluate(mesh, items, gripper, obj, ground_z, config):
    cache = {}
    out = []
    for i, pose in items:
        r = simulate_grasp(mesh, pose, gripper, obj, ground_z, cache=cache)
        q = -np.inf if r.collided else compute_quality(r, EPS, config.use_top_term)
        out.append(GraspCandidate(i, pose, q, r))
    return out


def generate_candidates(mesh: TriMesh, location=(0.0, 0.0, 0.0), gripper=None, config=PlannerConfig(),
                        obj=ObjectProps(), n_jobs=1, keep_pruned=False):
    """Samples, simulates and ranks grasps, best first.

    Ties in quality are broken by (sample index, approach distance). Pruned
    (colliding) candidates get q = -inf and are dropped unless ``keep_pruned``.
    """
    mesh.require_watertight()
    gripper = resolve_gripper(gripper)
    placed, poses = candidate_poses(mesh, location, gripper, config)
    ground_z = None
    if config.check_ground:
        ground_z = float(placed.bounds[0][2]) if config.ground_z is None else float(config.ground_z)
    if n_jobs == 1 or len(poses) < 2:
        evaluated = _evaluate(placed, poses, gripper, obj, ground_z, config)
    else:
        n_chunks = min(len(poses), 4 * (n_jobs if n_jobs > 0 else 8))
        chunks = [c.tolist() for c in np.array_split(np.arange(len(poses)), n_chunks)]
        parts = Parallel(n_jobs=n_jobs)(
            delayed(_evaluate)(placed, [poses[k] for k in c], gripper, obj, ground_z, config) for c in chunks
        )
        evaluated = [c for part in parts for c in part]
    evaluated.sort(key=lambda c: (-c.quality, c.sample_id, c.distance))
    kept = evaluated if keep_pruned else [c for c in evaluated if np.isfinite(c.quality)]
    if not kept:
        raise NoCandidatesError()
    return kept


CSV_HEADER = ["sample_id", "d", "px", "py", "pz", "qw", "qx", "qy", "qz",
              "dh_r", "dl", "dh", "S", "F", "T", "q"]


def candidates_to_csv(candidates, path=None):
    """Candidate dump; returns the text when ``path`` is None."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for c in candidates:
        r = c.result
        w.writerow([c.sample_id, repr(c.distance), *map(repr, map(float, c.position)),
                    *map(repr, map(float, c.orientation)), repr(r.dh_r), repr(r.dl), repr(r.dh),
                    r.S, r.F, repr(r.T), repr(c.quality)])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


class GraspPlanner(BaseEstimator):
    """Estimator wrapper: ``fit(mesh)`` ranks candidates, ``predict()`` returns the best one."""

    def __init__(self, gripper="parallel-jaw", sample_count=50, distances=DISTANCES, mass=0.1,
                 mu=0.5, use_top_term=True, seed=0, n_jobs=1):
        self.gripper = gripper
        self.sample_count = sample_count
        self.distances = distances
        self.mass = mass
        self.mu = mu
        self.use_top_term = use_top_term
        self.seed = seed
        self.n_jobs = n_jobs

    def fit(self, mesh, y=None, location=(0.0, 0.0, 0.0), ground_z=None):
        if not isinstance(mesh, TriMesh):
            raise TypeError("expected a TriMesh")
        cfg = PlannerConfig(self.sample_count, tuple(self.distances), self.seed, self.use_top_term, ground_z)
        self.candidates_ = generate_candidates(
            mesh, location, self.gripper, cfg, ObjectProps(self.mass, self.mu), self.n_jobs
        )
        return self

    def predict(self, X=None):
        return self.candidates_[0]
