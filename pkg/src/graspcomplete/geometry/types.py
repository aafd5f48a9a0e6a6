"""Immutable geometric containers shared by every stage of the pipeline.

All lengths are meters.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial.transform import Rotation

from ..errors import GeometryError, OpenMeshError

LABELS = ("visual", "tactile", "second-view")

DEGENERATE_AREA = 1e-12


def _as_points(a, name="points"):
    arr = np.asarray(a, dtype=np.float64)
    if arr.size == 0:
        arr = arr.reshape(0, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise GeometryError(f"{name} must have shape (n, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError(f"{name} contain non-finite coordinates")
    return arr


def _freeze(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class OrientedPointCloud:
    """Points with optional unit normals and a per-point source label."""

    points: np.ndarray
    normals: np.ndarray | None = None
    labels: np.ndarray | None = None

    def __post_init__(self):
        pts = _as_points(self.points)
        object.__setattr__(self, "points", _freeze(pts))
        if self.normals is not None:
            nrm = _as_points(self.normals, "normals")
            if nrm.shape != pts.shape:
                raise GeometryError("points and normals differ in length")
            lengths = np.linalg.norm(nrm, axis=1)
            if np.any(np.abs(lengths - 1.0) > 1e-6):
                raise GeometryError("normals must be unit length")
            object.__setattr__(self, "normals", _freeze(nrm))
        labels = self.labels
        if labels is None:
            labels = np.full(len(pts), "visual")
        elif isinstance(labels, str):
            labels = np.full(len(pts), labels)
        labels = np.asarray(labels, dtype="<U11")
        if labels.shape != (len(pts),):
            raise GeometryError("one label per point required")
        bad = set(np.unique(labels)) - set(LABELS)
        if bad:
            raise GeometryError(f"unknown labels {sorted(bad)}")
        object.__setattr__(self, "labels", _freeze(labels))

    def __len__(self):
        return len(self.points)

    @property
    def has_normals(self):
        return self.normals is not None

    def transformed(self, T: RigidTransform) -> OrientedPointCloud:
        normals = None if self.normals is None else T.rotate(self.normals)
        if normals is not None:
            normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
        return OrientedPointCloud(T.apply(self.points), normals, self.labels)

    def select(self, mask) -> OrientedPointCloud:
        normals = None if self.normals is None else self.normals[mask]
        return OrientedPointCloud(self.points[mask], normals, self.labels[mask])

    def count_by_label(self):
        return {lab: int(np.sum(self.labels == lab)) for lab in LABELS}

    @staticmethod
    def concatenate(clouds) -> OrientedPointCloud:
        clouds = [c for c in clouds if c is not None]
        if not clouds:
            return OrientedPointCloud(np.zeros((0, 3)))
        with_normals = all(c.has_normals for c in clouds)
        return OrientedPointCloud(
            np.concatenate([c.points for c in clouds]),
            np.concatenate([c.normals for c in clouds]) if with_normals else None,
            np.concatenate([c.labels for c in clouds]),
        )


@dataclass(frozen=True, eq=False)
class FreeSpaceSet:
    """Points known to be outside the object. Never used as surface evidence."""

    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _freeze(_as_points(self.points)))

    def __len__(self):
        return len(self.points)

    def transformed(self, T: RigidTransform) -> FreeSpaceSet:
        return FreeSpaceSet(T.apply(self.points))

    @staticmethod
    def concatenate(sets) -> FreeSpaceSet:
        sets = [s for s in sets if s is not None]
        if not sets:
            return FreeSpaceSet(np.zeros((0, 3)))
        return FreeSpaceSet(np.concatenate([s.points for s in sets]))


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = _as_points(self.vertices, "vertices")
        f = np.asarray(self.faces)
        if f.size == 0:
            f = f.reshape(0, 3)
        if f.ndim != 2 or f.shape[1] != 3:
            raise GeometryError(f"faces must have shape (m, 3), got {f.shape}")
        f = f.astype(np.int64)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise GeometryError("face index out of range")
        object.__setattr__(self, "vertices", _freeze(v))
        object.__setattr__(self, "faces", _freeze(f))

    @property
    def is_empty(self):
        return len(self.faces) == 0

    @cached_property
    def triangles(self):
        """(m, 3, 3) corner coordinates."""
        return _freeze(self.vertices[self.faces])

    @cached_property
    def _cross(self):
        tri = self.triangles
        return np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])

    @cached_property
    def face_areas(self):
        return _freeze(0.5 * np.linalg.norm(self._cross, axis=1))

    @cached_property
    def face_normals(self):
        c = self._cross
        n = np.linalg.norm(c, axis=1, keepdims=True)
        return _freeze(c / np.where(n > 0, n, 1.0))

    @cached_property
    def area(self):
        return float(self.face_areas.sum())

    @cached_property
    def bounds(self):
        return _freeze(np.stack([self.vertices.min(axis=0), self.vertices.max(axis=0)]))

    @cached_property
    def centroid(self):
        """Area-weighted surface centroid."""
        c = self.triangles.mean(axis=1)
        w = self.face_areas
        return _freeze((c * w[:, None]).sum(axis=0) / w.sum())

    @cached_property
    def volume_centroid(self):
        """Centroid of the enclosed solid (valid for closed meshes)."""
        tri = self.triangles
        vol = np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])) / 6.0
        total = vol.sum()
        if abs(total) < 1e-18:
            return self.centroid
        return _freeze((tri.sum(axis=1) / 4.0 * vol[:, None]).sum(axis=0) / total)

    @cached_property
    def volume(self):
        tri = self.triangles
        return float(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum() / 6.0)

    def degenerate_faces(self, tol=DEGENERATE_AREA):
        return np.flatnonzero(self.face_areas <= tol)

    @cached_property
    def edges(self):
        """Unique undirected edges (k, 2) with sorted vertex ids."""
        e = np.sort(self._directed_edges, axis=1)
        return _freeze(np.unique(e, axis=0))

    @cached_property
    def _directed_edges(self):
        f = self.faces
        return np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])

    def boundary_edge_count(self):
        """Number of undirected edges not shared by exactly two faces."""
        if self.is_empty:
            return 0
        e = np.sort(self._directed_edges, axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return int(np.sum(counts != 2))

    @cached_property
    def is_watertight(self):
        """Every edge shared by exactly two faces with opposite orientation."""
        if self.is_empty:
            return False
        d = self._directed_edges
        n = len(self.vertices)
        key = d[:, 0] * n + d[:, 1]
        if len(np.unique(key)) != len(key):
            return False
        rev = d[:, 1] * n + d[:, 0]
        return bool(np.all(np.isin(rev, key)))

    def euler_characteristic(self):
        used = np.unique(self.faces)
        return int(len(used) - len(self.edges) + len(self.faces))

    @cached_property
    def query(self):
        """Lazily built distance / inside-test accelerator."""
        from .query import MeshQuery

        return MeshQuery(self)

    def require_watertight(self):
        if self.is_empty:
            raise GeometryError("empty mesh")
        if not self.is_watertight:
            raise OpenMeshError(
                f"open mesh ({self.boundary_edge_count()} boundary edges)",
                boundary_edges=self.boundary_edge_count(),
            )
        return self

    def transformed(self, T: RigidTransform) -> TriMesh:
        return TriMesh(T.apply(self.vertices), self.faces)

    def scaled(self, factor, about=None) -> TriMesh:
        about = self.volume_centroid if about is None else np.asarray(about, float)
        return TriMesh(about + factor * (self.vertices - about), self.faces)

    def translated(self, offset) -> TriMesh:
        return TriMesh(self.vertices + np.asarray(offset, float), self.faces)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation (unit quaternion, scalar first) followed by translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(t))):
            raise GeometryError("non-finite transform")
        n = np.linalg.norm(q)
        if n < 1e-12:
            raise GeometryError("zero quaternion")
        q = q / n
        if q[0] < 0:
            q = -q
        object.__setattr__(self, "rotation", _freeze(q))
        object.__setattr__(self, "translation", _freeze(t))

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_matrix(cls, R, t=(0.0, 0.0, 0.0)):
        x, y, z, w = Rotation.from_matrix(np.asarray(R, float)).as_quat()
        return cls(np.array([w, x, y, z]), t)

    @classmethod
    def from_homogeneous(cls, H):
        H = np.asarray(H, float)
        return cls.from_matrix(H[:3, :3], H[:3, 3])

    @classmethod
    def from_rotvec(cls, rotvec, t=(0.0, 0.0, 0.0)):
        x, y, z, w = Rotation.from_rotvec(np.asarray(rotvec, float)).as_quat()
        return cls(np.array([w, x, y, z]), t)

    @classmethod
    def from_translation(cls, t):
        return cls(translation=t)

    @cached_property
    def matrix(self):
        """3x3 rotation matrix."""
        w, x, y, z = self.rotation
        return _freeze(Rotation.from_quat([x, y, z, w]).as_matrix())

    @property
    def homogeneous(self):
        H = np.eye(4)
        H[:3, :3] = self.matrix
        H[:3, 3] = self.translation
        return H

    def apply(self, points):
        p = np.asarray(points, dtype=np.float64)
        return p @ self.matrix.T + self.translation

    def rotate(self, vectors):
        return np.asarray(vectors, dtype=np.float64) @ self.matrix.T

    def __matmul__(self, other: RigidTransform) -> RigidTransform:
        """Composition: (self @ other).apply(x) == self.apply(other.apply(x))."""
        R = self.matrix @ other.matrix
        t = self.matrix @ other.translation + self.translation
        return RigidTransform.from_matrix(R, t)

    def inverse(self) -> RigidTransform:
        w, x, y, z = self.rotation
        Rt = self.matrix.T
        return RigidTransform(np.array([w, -x, -y, -z]), -Rt @ self.translation)

    def rotation_angle(self):
        return float(2.0 * np.arccos(np.clip(abs(self.rotation[0]), 0.0, 1.0)))

    def as_dict(self):
        return {"rotation_wxyz": self.rotation.tolist(), "translation": self.translation.tolist()}


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    origin: np.ndarray
    voxel_size: float
    dims: tuple
    occupancy: np.ndarray

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or min(dims) < 1:
            raise GeometryError("dims must be three positive integers")
        if not self.voxel_size > 0:
            raise GeometryError("voxel_size must be positive")
        occ = np.asarray(self.occupancy, dtype=bool)
        if occ.size != int(np.prod(dims)):
            raise GeometryError("occupancy length must equal dx*dy*dz")
        object.__setattr__(self, "origin", _freeze(origin))
        object.__setattr__(self, "voxel_size", float(self.voxel_size))
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "occupancy", _freeze(occ.reshape(dims)))

    @staticmethod
    def centers_for(origin, voxel_size, dims):
        axes = [origin[i] + (np.arange(dims[i]) + 0.5) * voxel_size for i in range(3)]
        g = np.meshgrid(*axes, indexing="ij")
        return np.stack([a.ravel() for a in g], axis=1)

    def centers(self):
        return self.centers_for(self.origin, self.voxel_size, self.dims)

    @property
    def count(self):
        return int(self.occupancy.sum())

    def same_grid(self, other: VoxelGrid):
        return (
            self.dims == other.dims
            and np.allclose(self.origin, other.origin, rtol=0, atol=1e-12)
            and abs(self.voxel_size - other.voxel_size) <= 1e-15
        )
