"""Deterministic quasi-static grasp test: approach, close, lift, rotate."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import GeometryError
from ..geometry.raycast import ParallelRayCaster
from ..geometry.types import RigidTransform, TriMesh

GRAVITY = 9.81
NORMAL_FORCE = 1.0
COLLISION_MARGIN = 2e-3
PUSH_THRESHOLD = 5e-3
LIFT_HEIGHT = 0.10
PRE_OFFSET = 0.10
EPS = 1e-3
UP = np.array([0.0, 0.0, 1.0])
PARALLEL_COS = np.cos(np.radians(1.0))
# tactile pillar array on each finger pad (3 x 3 at 5 mm pitch); a pillar
# reports a contact when the closed finger is within this distance of the surface
PILLAR_GRID = 3
PILLAR_PITCH = 5e-3
PILLAR_REACH = 1e-3


@dataclass(frozen=True)
class ObjectProps:
    mass: float = 0.1
    mu: float = 0.5

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if not self.mu > 0:
            raise ValueError("friction coefficient must be positive")

    @property
    def weight(self):
        return self.mass * GRAVITY


@dataclass(frozen=True, eq=False)
class GraspPose:
    """Virtual base frame position, wxyz orientation and the approach distance it was built with."""

    position: np.ndarray
    orientation: np.ndarray
    distance: float = 0.0

    @property
    def transform(self):
        return RigidTransform(self.orientation, self.position)


@dataclass(frozen=True, eq=False)
class Contact:
    point: np.ndarray
    normal: np.ndarray
    finger: int


@dataclass(frozen=True, eq=False)
class GraspSimResult:
    contacts: tuple
    object_displacement: np.ndarray
    dh_r: float
    dl: float
    dh: float
    S: int
    F: int
    T: float
    success: bool
    collided: bool = False
    closing_state: np.ndarray = field(default_factory=lambda: np.zeros(0))
    push: float = 0.0
    tactile_sites: tuple = ()

    @property
    def components(self):
        return (self.dh_r, self.dl, self.dh, self.S, self.F, self.T)


def compute_orientation(normal, approach_axis=(0.0, 0.0, 1.0), up=UP):
    """wxyz quaternion turning the gripper approach axis onto -normal.

    Roll about the approach axis puts the gripper's reference axis on world up
    projected into the orthogonal plane (world x when up is within 1 degree of
    the approach direction).
    """
    n = np.asarray(normal, float)
    norm = np.linalg.norm(n)
    if not norm > 0 or not np.isfinite(norm):
        raise GeometryError("zero normal")
    a = -n / norm
    g = np.asarray(approach_axis, float)
    g = g / np.linalg.norm(g)

    def frame(z, ref, fallback):
        r = ref if abs(np.dot(ref, z)) < PARALLEL_COS else fallback
        x = r - np.dot(r, z) * z
        x /= np.linalg.norm(x)
        return np.stack([x, np.cross(z, x), z], axis=1)

    ex = np.array([1.0, 0.0, 0.0])
    ez = np.array([0.0, 0.0, 1.0])
    # gripper reference axis: x for a z-approach, otherwise whatever is orthogonal
    G = frame(g, ex, ez)
    W = frame(a, np.asarray(up, float), ex)
    return RigidTransform.from_matrix(W @ G.T).rotation


def compute_quality(result: GraspSimResult, eps=EPS, use_top=True) -> float:
    """1 / (dh_r + dl + dh + eps) + F + S + T."""
    q = 1.0 / (abs(result.dh_r) + abs(result.dl) + abs(result.dh) + eps) + result.F + result.S
    return float(q + (result.T if use_top else 0.0))


def quality_from_components(dh_r, dl, dh, S, F, T, eps=EPS):
    return 1.0 / (abs(dh_r) + abs(dl) + abs(dh) + eps) + F + S + T


def _opposing(contacts, push, mu):
    """Force closure for flat pads pushing along their closing directions.

    A contact bears load when its inward normal lies inside the friction cone
    around its finger's push direction; the loaded fingers must push against
    each other (net push carried by less than one contact's friction).
    """
    cos_half = np.cos(np.arctan(mu))
    loaded = {}
    for c in contacts:
        if np.dot(-c.normal, push[c.finger]) >= cos_half - 1e-12:
            loaded[c.finger] = push[c.finger]
    if len(loaded) < 2:
        return False
    return bool(np.linalg.norm(np.sum(list(loaded.values()), axis=0)) < mu)


def _hits(caster, origins, t_max, sign=1.0):
    """First hit along +direction (sign=1) or -direction (sign=-1) of the caster."""
    ray, face, t, _ = caster.intersect(origins)
    t = sign * t
    keep = (t >= 0) & (t <= t_max)
    best_t = np.full(len(origins), np.inf)
    best_f = np.full(len(origins), -1, dtype=np.int64)
    ray, face, t = ray[keep], face[keep], t[keep]
    if len(ray):
        order = np.lexsort((face, t, ray))
        ray, face, t = ray[order], face[order], t[order]
        first = np.concatenate([[True], ray[1:] != ray[:-1]])
        best_t[ray[first]] = t[first]
        best_f[ray[first]] = face[first]
    return best_t, best_f


def _caster_for(mesh, direction, cache):
    d = np.asarray(direction, float)
    d = d / np.linalg.norm(d)
    key = tuple(np.round(d, 12))
    neg = tuple(np.round(-d, 12))
    if key in cache:
        return cache[key], 1.0
    if neg in cache:
        return cache[neg], -1.0
    c = ParallelRayCaster(mesh.triangles, d)
    cache[key] = c
    return c, 1.0


def approach_collides(mesh, pose, gripper, ground_z=None, pre_offset=PRE_OFFSET, cache=None):
    """Sweep the open gripper body from pre_offset behind the pose to the pose."""
    cache = {} if cache is None else cache
    T = pose.transform if isinstance(pose, GraspPose) else pose
    a = T.rotate(gripper.approach_axis)
    final = T.apply(gripper.body_samples)
    start = final - pre_offset * a
    if ground_z is not None:
        if min(final[:, 2].min(), start[:, 2].min()) < ground_z + COLLISION_MARGIN:
            return True
    caster, sign = _caster_for(mesh, a, cache)
    t, _ = _hits(caster, start, pre_offset, sign)
    if np.any(np.isfinite(t)):
        return True
    q = mesh.query
    d = q.unsigned_distance(final, COLLISION_MARGIN)
    if np.any(d < COLLISION_MARGIN):
        return True
    return bool(np.any(q.contains(final)))


def simulate_grasp(mesh: TriMesh, pose, gripper, obj=ObjectProps(), ground_z=None,
                   pre_offset=PRE_OFFSET, h_lift=LIFT_HEIGHT, cache=None) -> GraspSimResult:
    """Quasi-static stand-in for a physics grasp test.

    ``pose`` is a GraspPose or RigidTransform of the gripper base frame.
    ``ground_z`` enables the ground-plane collision check.
    """
    mesh.require_watertight()
    cache = {} if cache is None else cache
    T = pose.transform if isinstance(pose, GraspPose) else pose
    a = T.rotate(gripper.approach_axis)
    top = float(1.0 - abs(np.dot(a, -UP)))
    W = obj.weight
    com = mesh.volume_centroid
    rel = com - T.translation
    d_cm = float(np.linalg.norm(rel - np.dot(rel, a) * a))
    push_dirs = [T.rotate(f.closing_axis) for f in gripper.fingers]

    def finish(contacts, collided, closing, push, sites=()):
        n_c = len(contacts)
        C = obj.mu * NORMAL_FORCE * n_c
        dh_r = min(h_lift, max(0.0, (W - C) / W) * h_lift)
        tau_req = W * d_cm
        r = [np.linalg.norm((c.point - T.translation) - np.dot(c.point - T.translation, a) * a) for c in contacts]
        tau_cap = obj.mu * NORMAL_FORCE * float(np.sum(r)) if r else 0.0
        dl = min(d_cm, max(0.0, (tau_req - tau_cap) / max(tau_req, EPS)) * d_cm)
        dh = dl / 2
        S = int(n_c >= 2 and _opposing(contacts, push_dirs, obj.mu) and tau_cap >= 0.5 * tau_req)
        F = int(not collided and push < PUSH_THRESHOLD)
        success = bool(S == 1 and dh_r == 0.0)
        disp = np.array([0.0, 0.0, h_lift - dh_r]) if n_c else np.zeros(3)
        return GraspSimResult(tuple(contacts), disp, dh_r, dl, dh, S, F, top, success,
                              collided, np.asarray(closing, float), float(push), tuple(sites))

    if approach_collides(mesh, T, gripper, ground_z, pre_offset, cache):
        return finish([], True, np.zeros(len(gripper.fingers)), 0.0)

    contacts, sites, travel = [], [], []
    fn = mesh.face_normals
    for i, finger in enumerate(gripper.fingers):
        probes = finger.probe_grid()
        origins = T.apply(probes)
        c_dir = T.rotate(finger.closing_axis)
        caster, sign = _caster_for(mesh, c_dir, cache)
        t, f = _hits(caster, origins, gripper.max_travel, sign)
        j = int(np.argmin(t))
        if not np.isfinite(t[j]):
            travel.append(gripper.max_travel)
            continue
        travel.append(float(t[j]))
        contacts.append(Contact(origins[j] + t[j] * c_dir, fn[f[j]].copy(), i))
        pillars = T.apply(finger.pillar_grid(probes[j], PILLAR_GRID, PILLAR_PITCH))
        tp, fp = _hits(caster, pillars, gripper.max_travel + PILLAR_REACH, sign)
        for k in np.flatnonzero(tp - t[j] <= PILLAR_REACH):
            sites.append(Contact(pillars[k] + tp[k] * c_dir, fn[fp[k]].copy(), i))
    travel = np.array(travel)
    push = float((travel.max() - travel.min()) / 2) if len(travel) else 0.0
    return finish(contacts, False, travel, push, sites)
