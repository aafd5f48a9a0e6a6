"""Pinhole depth camera rendered by ray casting against the object mesh."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import NotVisibleError
from ..geometry.raycast import _expand_ranges, ray_triangle
from ..geometry.sampling import estimate_normals
from ..geometry.types import OrientedPointCloud, RigidTransform

# noise is drawn from a normal distribution truncated at this many sigmas,
# so every rendered point stays within 3 sigma of the true surface
NOISE_CLIP = 3.0


@dataclass(frozen=True, eq=False)
class VirtualCamera:
    """Camera-to-world pose in the optical convention (z forward, x right, y down)."""

    pose: RigidTransform
    fx: float = 600.0
    fy: float = 600.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480
    sigma: float = 0.0015

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.sigma < 0:
            raise ValueError("depth noise must be >= 0")
        if self.width < 1 or self.height < 1:
            raise ValueError("resolution must be positive")

    @property
    def center(self):
        return self.pose.translation

    @property
    def forward(self):
        return self.pose.rotate([0.0, 0.0, 1.0])

    def with_noise(self, sigma):
        return replace(self, sigma=sigma)

    def pixel_rays(self, cols, rows):
        d = np.stack([(cols - self.cx) / self.fx, (rows - self.cy) / self.fy, np.ones(len(cols))], axis=1)
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return self.pose.rotate(d)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> RigidTransform:
    eye = np.asarray(eye, float)
    z = np.asarray(target, float) - eye
    z /= np.linalg.norm(z)
    up = np.asarray(up, float)
    if abs(np.dot(up, z)) > 0.999:
        up = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = np.cross(z, -up)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return RigidTransform.from_matrix(np.stack([x, y, z], axis=1), eye)


def camera_for_scene(scene, distance=0.6, elevation=np.radians(20.0), azimuth=0.0, width=640, height=480,
                     fx=600.0, fy=600.0, sigma=0.0015) -> VirtualCamera:
    """Camera ``distance`` from the object center, raised by ``elevation``;
    azimuth 0 looks along +y."""
    c = scene.world_mesh.volume_centroid
    off = distance * np.array([np.cos(elevation) * np.sin(azimuth), -np.cos(elevation) * np.cos(azimuth), np.sin(elevation)])
    return VirtualCamera(look_at(c + off, c), fx, fy, (width - 1) / 2, (height - 1) / 2, width, height, sigma)


def render_depth_cloud(scene, cam: VirtualCamera, seed=0, label="visual", k_normals=16) -> OrientedPointCloud:
    """One point per pixel whose ray hits the object (perfect segmentation).

    Depth noise acts along the viewing ray; normals are estimated from the
    cloud and oriented toward the camera.
    """
    mesh = scene.world_mesh
    inv = cam.pose.inverse()
    tri_c = inv.apply(mesh.triangles.reshape(-1, 3)).reshape(-1, 3, 3)
    front = np.all(tri_c[:, :, 2] > 1e-6, axis=1)
    faces = np.flatnonzero(front)
    pts = tri_c[faces]
    u = cam.fx * pts[:, :, 0] / pts[:, :, 2] + cam.cx
    v = cam.fy * pts[:, :, 1] / pts[:, :, 2] + cam.cy
    c0 = np.clip(np.ceil(u.min(axis=1)), 0, cam.width).astype(np.int64)
    c1 = np.clip(np.floor(u.max(axis=1)), -1, cam.width - 1).astype(np.int64)
    r0 = np.clip(np.ceil(v.min(axis=1)), 0, cam.height).astype(np.int64)
    r1 = np.clip(np.floor(v.max(axis=1)), -1, cam.height - 1).astype(np.int64)
    ok = (c1 >= c0) & (r1 >= r0)
    faces, c0, c1, r0, r1 = faces[ok], c0[ok], c1[ok], r0[ok], r1[ok]
    if len(faces) == 0:
        raise NotVisibleError()
    item, cols, rows = _expand_ranges(c0, c1, r0, r1)
    pix = rows * cam.width + cols
    upix, inverse = np.unique(pix, return_inverse=True)
    pr, pc = np.divmod(upix, cam.width)
    dirs = cam.pixel_rays(pc.astype(float), pr.astype(float))
    origin = cam.center
    tri = mesh.triangles[faces[item]]
    d_pair = dirs[inverse]
    t, bu, bv, valid = ray_triangle(np.broadcast_to(origin, d_pair.shape), d_pair, tri[:, 0], tri[:, 1], tri[:, 2])
    hit = valid & (bu >= 0) & (bv >= 0) & (bu + bv <= 1) & (t > 0)
    best = np.full(len(upix), np.inf)
    np.minimum.at(best, inverse[hit], t[hit])
    seen = np.isfinite(best)
    if not np.any(seen):
        raise NotVisibleError()
    t_hit = best[seen]
    rng = np.random.default_rng(seed)
    noise = np.clip(rng.normal(0.0, 1.0, size=len(t_hit)), -NOISE_CLIP, NOISE_CLIP) * cam.sigma
    points = origin + (t_hit + noise)[:, None] * dirs[seen]
    cloud = OrientedPointCloud(points, None, label)
    k = min(k_normals, len(points))
    if k < 3:
        raise NotVisibleError("too few visible points")
    return estimate_normals(cloud, k=k, viewpoint=origin)


def coverage(gt_samples, clouds, radius=0.01):
    """Fraction of ground-truth samples within ``radius`` of any cloud point."""
    from scipy.spatial import cKDTree

    pts = np.concatenate([c.points if hasattr(c, "points") else c for c in clouds])
    d, _ = cKDTree(pts).query(gt_samples)
    return float(np.mean(d <= radius))
