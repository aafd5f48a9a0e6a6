"""Synthetic world: ground-truth object, its pose and the table camera."""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, replace

import numpy as np

from ..errors import ConfigError, GeometryError
from ..geometry.io import read_mesh
from ..geometry.primitives import box, capsule, cylinder, icosphere, mug
from ..geometry.types import RigidTransform, TriMesh

DEFAULT_MASS = 0.1
DEFAULT_MU = 0.5


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    gt_mesh: TriMesh
    pose: RigidTransform
    mass: float = DEFAULT_MASS
    mu: float = DEFAULT_MU
    ground_height: float = 0.0
    name: str = "object"

    def __post_init__(self):
        self.gt_mesh.require_watertight()
        if not self.mass > 0 or not self.mu > 0:
            raise ValueError("mass and friction must be positive")

    @property
    def world_mesh(self) -> TriMesh:
        return self.gt_mesh.transformed(self.pose)

    def with_pose(self, pose):
        return replace(self, pose=pose)

    def resting(self, yaw=0.0, xy=(0.0, 0.0)):
        """Pose with the object upright on the ground, rotated by ``yaw`` about z."""
        R = RigidTransform.from_rotvec([0.0, 0.0, yaw])
        z = self.ground_height - float(R.apply(self.gt_mesh.vertices)[:, 2].min())
        return RigidTransform(R.rotation, [xy[0], xy[1], z])


def regrounded(mesh: TriMesh, pose: RigidTransform, ground=0.0) -> RigidTransform:
    """Shift ``pose`` vertically so the posed mesh touches the ground plane."""
    dz = ground - float(pose.apply(mesh.vertices)[:, 2].min())
    return RigidTransform(pose.rotation, pose.translation + [0.0, 0.0, dz])


def _floats(text, n=None):
    vals = [float(x) for x in text.replace(",", " ").split()]
    if n is not None and len(vals) != n:
        raise ValueError(f"expected {n} values")
    return vals


def library_mesh(spec: str) -> TriMesh:
    """Primitive by name (``sphere:r``, ``box:dx,dy,dz``, ``cylinder:r,h``,
    ``capsule:r,length``, ``mug``) or a mesh file path."""
    name, _, args = spec.partition(":")
    name = name.strip().lower()
    try:
        if name == "sphere":
            (r,) = _floats(args or "0.03", 1)
            return icosphere(r, 3)
        if name == "box":
            return box(*_floats(args or "0.05,0.04,0.1", 3))
        if name == "cylinder":
            r, h = _floats(args or "0.03,0.1", 2)
            return cylinder(r, h)
        if name == "capsule":
            r, length = _floats(args or "0.025,0.06", 2)
            return capsule(r, length)
        if name == "mug":
            return mug(*_floats(args, 2)) if args else mug()
    except ValueError as exc:
        raise GeometryError(f"bad object spec {spec!r}: {exc}") from None
    if not os.path.exists(spec):
        if name in ("sphere", "box", "cylinder", "capsule", "mug") or ":" in spec:
            raise GeometryError(f"bad object spec {spec!r}")
        raise FileNotFoundError(f"no such file: {spec}")
    mesh = read_mesh(spec)
    mesh.require_watertight()
    return mesh


def object_library(spec: str, mass=DEFAULT_MASS, mu=DEFAULT_MU, yaw=0.0, xy=(0.0, 0.0)) -> SyntheticScene:
    """Scene with the object resting on the ground at the origin."""
    mesh = library_mesh(spec)
    name = spec if ":" in spec or spec == "mug" else os.path.splitext(os.path.basename(spec))[0]
    s = SyntheticScene(mesh, RigidTransform.identity(), mass, mu, 0.0, name)
    return s.with_pose(s.resting(yaw, xy))


SUITE = ("sphere:0.03", "box:0.05,0.04,0.1", "cylinder:0.03,0.1", "capsule:0.025,0.06", "mug")


def read_config(path, text=None) -> configparser.ConfigParser:
    """INI parsing with errors carrying the file and line."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        if text is None:
            if not os.path.exists(path):
                raise FileNotFoundError(f"no such file: {path}")
            with open(path) as fh:
                text = fh.read()
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], path, getattr(exc, "lineno", None)) from None
    return cp


def key_line(path, section, key):
    """Line number of ``key`` inside ``[section]``, for error messages."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError:
        return None
    current = None
    for i, line in enumerate(lines, 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and s.split("=")[0].strip().lower() == key.lower():
            return i
    return None


def get_value(cp, path, section, key, cast, default=None):
    if not cp.has_option(section, key):
        if default is None:
            raise ConfigError(f"missing key {key!r} in [{section}]", path)
        return default
    raw = cp.get(section, key)
    try:
        return cast(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}", path, key_line(path, section, key)) from None


def load_scene(path, text=None):
    """Scene file::

        [object]
        source = mug            # library spec or mesh path
        mass = 0.1
        mu = 0.5
        yaw_deg = 0
        xy = 0 0

        [camera]
        distance = 0.6
        elevation_deg = 20
        azimuth_deg = 0
        width = 640
        height = 480
        fx = 600
        fy = 600
        sigma = 0.0015

    Returns (SyntheticScene, VirtualCamera).
    """
    from .camera import VirtualCamera, camera_for_scene

    cp = read_config(path, text)
    if not cp.has_section("object"):
        raise ConfigError("missing [object] section", path)
    src = get_value(cp, path, "object", "source", str)
    if not os.path.isabs(src) and ":" not in src and src != "mug":
        src = os.path.join(os.path.dirname(os.path.abspath(path)), src)
    scene = object_library(
        src,
        mass=get_value(cp, path, "object", "mass", float, DEFAULT_MASS),
        mu=get_value(cp, path, "object", "mu", float, DEFAULT_MU),
        yaw=np.radians(get_value(cp, path, "object", "yaw_deg", float, 0.0)),
        xy=get_value(cp, path, "object", "xy", lambda s: _floats(s, 2), [0.0, 0.0]),
    )
    sec = "camera"
    g = lambda k, cast, d: get_value(cp, path, sec, k, cast, d) if cp.has_section(sec) else d
    cam = camera_for_scene(
        scene,
        distance=g("distance", float, 0.6),
        elevation=np.radians(g("elevation_deg", float, 20.0)),
        azimuth=np.radians(g("azimuth_deg", float, 0.0)),
        width=g("width", int, 640),
        height=g("height", int, 480),
        fx=g("fx", float, 600.0),
        fy=g("fy", float, 600.0),
        sigma=g("sigma", float, 0.0015),
    )
    assert isinstance(cam, VirtualCamera)
    return scene, cam
