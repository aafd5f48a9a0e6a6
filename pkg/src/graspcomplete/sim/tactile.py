"""Tactile patches at sensed contacts and pose changes after failed grasps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry.raycast import ParallelRayCaster, orthonormal_basis
from ..geometry.types import OrientedPointCloud, RigidTransform
from .scene import regrounded

YAW_LIMIT = np.radians(15.0)
SHIFT_LIMIT = 0.02


@dataclass(frozen=True)
class TactileConfig:
    patch_edge: float = 0.005
    points_per_patch: int = 25

    def __post_init__(self):
        if not self.patch_edge > 0 or self.points_per_patch < 1:
            raise ValueError("patch settings must be positive")
        side = int(round(np.sqrt(self.points_per_patch)))
        if side * side != self.points_per_patch:
            raise ValueError("points_per_patch must be a square number")

    @property
    def side(self):
        return int(round(np.sqrt(self.points_per_patch)))


def patch_grid(point, normal, cfg: TactileConfig):
    """Square grid on the tangent plane centered at ``point``."""
    n, e1, e2 = orthonormal_basis(normal)
    k = cfg.side
    s = np.linspace(-cfg.patch_edge / 2, cfg.patch_edge / 2, k) if k > 1 else np.zeros(1)
    a, b = np.meshgrid(s, s, indexing="ij")
    return point + a.reshape(-1, 1) * e1 + b.reshape(-1, 1) * e2


def synth_tactile(contacts, mesh, cfg=TactileConfig()) -> OrientedPointCloud:
    """Patch per contact, projected onto ``mesh`` along the contact normal.

    Points whose projection ray misses within one patch edge fall back to the
    closest surface point. Normals are the mesh face normals.
    """
    fn = mesh.face_normals
    pts, nrm = [], []
    for c in contacts:
        n = np.asarray(c.normal, float)
        n = n / np.linalg.norm(n)
        grid = patch_grid(np.asarray(c.point, float), n, cfg)
        caster = ParallelRayCaster(mesh.triangles, -n)
        ray, face, t, _ = caster.intersect(grid + cfg.patch_edge * n)
        keep = (t >= 0) & (t <= 2 * cfg.patch_edge)
        ray, face, t = ray[keep], face[keep], t[keep]
        # hit closest to the tangent plane, i.e. t nearest to one patch edge
        best_t = np.full(len(grid), np.inf)
        best_f = np.full(len(grid), -1)
        order = np.lexsort((face, np.abs(t - cfg.patch_edge), ray))
        ray, face, t = ray[order], face[order], t[order]
        first = np.concatenate([[True], ray[1:] != ray[:-1]]) if len(ray) else np.zeros(0, bool)
        best_t[ray[first]] = t[first]
        best_f[ray[first]] = face[first]
        miss = ~np.isfinite(best_t)
        proj = grid + (cfg.patch_edge - np.where(miss, 0.0, best_t))[:, None] * n
        if miss.any():
            _, f, cp = mesh.query.closest(grid[miss])
            proj[miss] = cp
            best_f[miss] = f
        pts.append(proj)
        nrm.append(fn[best_f])
    if not pts:
        return OrientedPointCloud(np.zeros((0, 3)), np.zeros((0, 3)), "tactile")
    return OrientedPointCloud(np.concatenate(pts), np.concatenate(nrm), "tactile")


def perturb_pose_on_failure(scene, result, seed=0) -> RigidTransform:
    """Random yaw about the object's vertical axis plus a planar shift, object
    kept on the ground. Bounds double when contacts were made and lost."""
    rng = np.random.default_rng(seed)
    scale = 2.0 if len(result.contacts) > 0 else 1.0
    yaw = rng.uniform(-1.0, 1.0) * YAW_LIMIT * scale
    r = SHIFT_LIMIT * scale * np.sqrt(rng.uniform())
    phi = rng.uniform(0.0, 2 * np.pi)
    c = scene.world_mesh.volume_centroid
    Rz = RigidTransform.from_rotvec([0.0, 0.0, yaw])
    about = RigidTransform.from_translation(c + [r * np.cos(phi), r * np.sin(phi), 0.0]) @ Rz @ RigidTransform.from_translation(-c)
    return regrounded(scene.gt_mesh, about @ scene.pose, scene.ground_height)
