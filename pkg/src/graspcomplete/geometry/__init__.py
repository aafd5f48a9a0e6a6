import numpy as np

from .io import read_cloud, read_free_space, read_mesh, write_cloud_ply, write_mesh
from .query import MeshQuery
from .sampling import estimate_normals, sample_surface, voxelize
from .spatial import SpatialIndex
from .types import FreeSpaceSet, OrientedPointCloud, RigidTransform, TriMesh, VoxelGrid


def mesh_signed_distance(mesh, q):
    """Signed distance (negative inside) from query point(s) to a watertight mesh."""
    mesh.require_watertight()
    q = np.asarray(q, float)
    d = mesh.query.signed_distance(q.reshape(-1, 3))
    return float(d[0]) if q.ndim == 1 else d


__all__ = [
    "FreeSpaceSet",
    "MeshQuery",
    "OrientedPointCloud",
    "RigidTransform",
    "SpatialIndex",
    "TriMesh",
    "VoxelGrid",
    "estimate_normals",
    "mesh_signed_distance",
    "read_cloud",
    "read_free_space",
    "read_mesh",
    "sample_surface",
    "voxelize",
    "write_cloud_ply",
    "write_mesh",
]
