"""Gripper description: box links, finger closing axes, sampled body surface.

Description files are INI-style key-value text::

    [gripper]
    kind = parallel-jaw
    stroke = 0.085
    approach_axis = 0 0 1
    body_samples = 1200

    [palm]
    dims = 0.05 0.13 0.075
    center = 0 0 0.0375

    [finger.left]
    dims = 0.02 0.01 0.055
    center = 0 0.0475 0.1025
    closing_axis = 0 -1 0

``rotvec`` (radians) optionally rotates a link box about its center.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.spatial.transform import Rotation

from ..errors import ConfigError
from ..geometry.types import FreeSpaceSet, RigidTransform

KINDS = ("parallel-jaw", "three-finger")
PROBE_SPACING = 1e-3


@dataclass(frozen=True, eq=False)
class Link:
    dims: np.ndarray
    center: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def corners_to_world(self, local):
        return local @ self.rotation.T + self.center

    def surface_samples(self, n, rng):
        """Area-weighted uniform samples on the six box faces."""
        dx, dy, dz = self.dims / 2
        # (axis of the face normal, sign)
        faces = [(a, s) for a in range(3) for s in (-1, 1)]
        areas = np.array([np.prod(np.delete(self.dims, a)) for a, _ in faces])
        counts = np.floor(areas / areas.sum() * n).astype(int)
        counts[np.argsort(-areas, kind="stable")[: n - counts.sum()]] += 1
        out = []
        for (a, s), c in zip(faces, counts):
            p = rng.uniform(-1, 1, size=(c, 3)) * np.array([dx, dy, dz])
            p[:, a] = s * self.dims[a] / 2
            out.append(p)
        return self.corners_to_world(np.concatenate(out))


@dataclass(frozen=True, eq=False)
class Finger:
    link: Link
    closing_axis: np.ndarray

    def probe_grid(self, spacing=PROBE_SPACING):
        """Points on the inner face (the face whose normal is the closing axis)."""
        return self._face_grid(lambda extent: np.linspace(-extent / 2, extent / 2,
                                                          max(2, int(np.ceil(extent / spacing)) + 1)))

    def pillar_grid(self, around, n=3, pitch=5e-3):
        """n x n sensor pillars on the inner face, centered as close to the
        gripper-frame point ``around`` as the face allows."""
        local = self.link.rotation.T @ (np.asarray(around, float) - self.link.center)
        offsets = (np.arange(n) - (n - 1) / 2) * pitch
        return self._face_grid(lambda extent: offsets, local_shift=(local, offsets[-1]))

    def _face_grid(self, axis_values, local_shift=None):
        local_axis = self.link.rotation.T @ self.closing_axis
        a = int(np.argmax(np.abs(local_axis)))
        s = np.sign(local_axis[a])
        others = [i for i in range(3) if i != a]
        grids = []
        for i in others:
            grids.append(axis_values(self.link.dims[i]))
        u, v = np.meshgrid(*grids, indexing="ij")
        p = np.zeros((u.size, 3))
        p[:, others[0]] = u.ravel()
        p[:, others[1]] = v.ravel()
        p[:, a] = s * self.link.dims[a] / 2
        if local_shift is not None:
            local, span = local_shift
            for i in others:
                half = max(self.link.dims[i] / 2 - span, 0.0)
                p[:, i] += np.clip(local[i], -half, half)
        return self.link.corners_to_world(p)


@dataclass(frozen=True, eq=False)
class GripperModel:
    kind: str
    palm: Link
    fingers: tuple
    stroke: float
    approach_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    body_sample_count: int = 1200
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown gripper kind {self.kind!r}")
        if not self.stroke > 0:
            raise ValueError("stroke must be positive")
        if self.body_sample_count < 1:
            raise ValueError("body_samples must be >= 1")
        ax = np.asarray(self.approach_axis, float)
        if abs(np.linalg.norm(ax) - 1.0) > 1e-9:
            raise ValueError("approach_axis must be unit length")
        object.__setattr__(self, "approach_axis", ax)
        rng = np.random.default_rng(0)
        links = [self.palm] + [f.link for f in self.fingers]
        areas = np.array([2 * (l.dims[0] * l.dims[1] + l.dims[1] * l.dims[2] + l.dims[0] * l.dims[2]) for l in links])
        counts = np.maximum(1, np.round(areas / areas.sum() * self.body_sample_count).astype(int))
        pts, owner = [], []
        for i, (l, c) in enumerate(zip(links, counts)):
            pts.append(l.surface_samples(c, rng))
            owner.append(np.full(c, i))
        body = np.concatenate(pts)
        body.setflags(write=False)
        object.__setattr__(self, "body_samples", body)
        object.__setattr__(self, "sample_owner", np.concatenate(owner))

    @property
    def max_travel(self):
        """Distance each finger moves from open to fully closed."""
        return self.stroke / 2

    def posed_samples(self, closing_state=None):
        """Body samples in the gripper frame with fingers advanced by ``closing_state`` meters."""
        pts = np.array(self.body_samples)
        if closing_state is not None:
            for i, (f, t) in enumerate(zip(self.fingers, closing_state)):
                pts[self.sample_owner == i + 1] += float(t) * f.closing_axis
        return pts


def _pose_transform(pose):
    if isinstance(pose, RigidTransform):
        return pose
    return pose.transform


def gripper_free_space(gripper: GripperModel, pose, closing_state=None) -> FreeSpaceSet:
    """Gripper body samples (fingers at ``closing_state``) placed at ``pose`` in world."""
    T = _pose_transform(pose)
    return FreeSpaceSet(T.apply(gripper.posed_samples(closing_state)))


def _vec(cp, section, key, path, n=3, default=None):
    if not cp.has_option(section, key):
        if default is not None:
            return np.asarray(default, float)
        raise ConfigError(f"missing key {key!r} in [{section}]", path)
    raw = cp.get(section, key)
    try:
        v = np.array([float(x) for x in raw.replace(",", " ").split()])
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected numbers, got {raw!r}", path) from None
    if len(v) != n:
        raise ConfigError(f"[{section}] {key}: expected {n} values", path)
    return v


def _link(cp, section, path):
    dims = _vec(cp, section, "dims", path)
    if np.any(dims <= 0):
        raise ConfigError(f"[{section}] dims must be positive", path)
    rv = _vec(cp, section, "rotvec", path, default=(0, 0, 0))
    return Link(dims, _vec(cp, section, "center", path), Rotation.from_rotvec(rv).as_matrix())


def parse_gripper(text, path="<string>") -> GripperModel:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], path, getattr(exc, "lineno", None)) from None
    if not cp.has_section("gripper"):
        raise ConfigError("missing [gripper] section", path)
    g = cp["gripper"]
    try:
        stroke = float(g.get("stroke"))
        count = int(g.get("body_samples", "1200"))
    except (TypeError, ValueError):
        raise ConfigError("[gripper] stroke/body_samples must be numeric", path) from None
    if not cp.has_section("palm"):
        raise ConfigError("missing [palm] section", path)
    fingers = []
    for sec in cp.sections():
        if sec.startswith("finger"):
            ax = _vec(cp, sec, "closing_axis", path)
            fingers.append(Finger(_link(cp, sec, path), ax / np.linalg.norm(ax)))
    if not fingers:
        raise ConfigError("no [finger.*] sections", path)
    approach = _vec(cp, "gripper", "approach_axis", path, default=(0, 0, 1))
    try:
        return GripperModel(
            g.get("kind", "parallel-jaw"), _link(cp, "palm", path), tuple(fingers), stroke,
            approach / np.linalg.norm(approach), count, g.get("name", ""),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), path) from None


def load_gripper(path) -> GripperModel:
    with open(path) as fh:
        return parse_gripper(fh.read(), path)


BUNDLED = ("parallel-jaw", "three-finger")


def bundled_gripper(name="parallel-jaw") -> GripperModel:
    if name not in BUNDLED:
        raise ValueError(f"no bundled gripper {name!r}; choose from {BUNDLED}")
    text = resources.files("graspcomplete.grasp").joinpath("data", f"{name}.ini").read_text()
    return parse_gripper(text, f"{name}.ini")


def resolve_gripper(spec) -> GripperModel:
    """A bundled name, a description file path, or an existing model."""
    if isinstance(spec, GripperModel):
        return spec
    if spec is None or spec in BUNDLED:
        return bundled_gripper(spec or "parallel-jaw")
    return load_gripper(spec)
