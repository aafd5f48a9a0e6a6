"""OBJ / PLY reading and writing. Coordinates are meters."""
from __future__ import annotations

import os

import numpy as np

from ..errors import GeometryError
from .types import LABELS, FreeSpaceSet, OrientedPointCloud, TriMesh

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _check_exists(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")


def read_obj(path) -> TriMesh:
    _check_exists(path)
    verts, faces = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                if parts[0] == "v":
                    verts.append([float(x) for x in parts[1:4]])
                elif parts[0] == "f":
                    idx = [int(p.split("/")[0]) for p in parts[1:]]
                    idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                    for k in range(1, len(idx) - 1):
                        faces.append([idx[0], idx[k], idx[k + 1]])
            except ValueError as exc:
                raise GeometryError(f"{path}:{lineno}: malformed record") from exc
    return TriMesh(np.array(verts, float).reshape(-1, 3), np.array(faces, np.int64).reshape(-1, 3))


def write_obj(mesh: TriMesh, path):
    with open(path, "w") as fh:
        fh.write("# units: meters\n")
        np.savetxt(fh, mesh.vertices, fmt="v %.9f %.9f %.9f")
        np.savetxt(fh, mesh.faces + 1, fmt="f %d %d %d")


def _parse_ply_header(fh):
    if fh.readline().strip() != b"ply":
        raise GeometryError("not a PLY file")
    fmt = None
    comments = []
    elements = []
    while True:
        line = fh.readline()
        if not line:
            raise GeometryError("truncated PLY header")
        parts = line.decode("ascii", "replace").split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "comment":
            comments.append(" ".join(parts[1:]))
        elif parts[0] == "element":
            elements.append({"name": parts[1], "count": int(parts[2]), "props": []})
        elif parts[0] == "property":
            if parts[1] == "list":
                elements[-1]["props"].append((parts[4], "list", parts[2], parts[3]))
            else:
                elements[-1]["props"].append((parts[2], parts[1]))
        elif parts[0] == "end_header":
            break
    return fmt, comments, elements


def read_ply(path):
    """Returns (vertex property dict, faces or None, comments)."""
    _check_exists(path)
    with open(path, "rb") as fh:
        fmt, comments, elements = _parse_ply_header(fh)
        data = {}
        faces = None
        if fmt == "ascii":
            rest = fh.read().decode("ascii").split("\n")
            rows = iter([r for r in rest if r.strip()])
            for el in elements:
                if el["name"] == "vertex":
                    vals = np.array([next(rows).split() for _ in range(el["count"])], dtype=float).reshape(el["count"], -1)
                    for k, prop in enumerate(el["props"]):
                        data[prop[0]] = vals[:, k]
                elif el["name"] == "face":
                    fl = []
                    for _ in range(el["count"]):
                        r = [int(x) for x in next(rows).split()]
                        fl.append(r[1 : 1 + r[0]])
                    faces = _triangulate(fl)
                else:
                    for _ in range(el["count"]):
                        next(rows)
        elif fmt == "binary_little_endian":
            for el in elements:
                props = el["props"]
                if all(len(p) == 2 for p in props):
                    dt = np.dtype([(p[0], "<" + _PLY_TYPES[p[1]]) for p in props])
                    arr = np.frombuffer(fh.read(dt.itemsize * el["count"]), dtype=dt, count=el["count"])
                    if el["name"] == "vertex":
                        data = {name: arr[name].astype(float) for name in arr.dtype.names}
                elif el["name"] == "face" and len(props) == 1:
                    _, _, ctype, itype = props[0]
                    cdt = np.dtype("<" + _PLY_TYPES[ctype])
                    idt = np.dtype("<" + _PLY_TYPES[itype])
                    fl = []
                    for _ in range(el["count"]):
                        n = int(np.frombuffer(fh.read(cdt.itemsize), cdt)[0])
                        fl.append(np.frombuffer(fh.read(idt.itemsize * n), idt).astype(np.int64))
                    faces = _triangulate(fl)
                else:
                    raise GeometryError(f"unsupported PLY element layout: {el['name']}")
        else:
            raise GeometryError(f"unsupported PLY format: {fmt}")
    return data, faces, comments


def _triangulate(polys):
    tris = []
    for p in polys:
        for k in range(1, len(p) - 1):
            tris.append([p[0], p[k], p[k + 1]])
    return np.array(tris, np.int64).reshape(-1, 3)


def read_mesh(path) -> TriMesh:
    if str(path).lower().endswith(".obj"):
        return read_obj(path)
    data, faces, _ = read_ply(path)
    if faces is None:
        raise GeometryError(f"{path}: PLY has no faces")
    v = np.stack([data["x"], data["y"], data["z"]], axis=1)
    return TriMesh(v, faces)


def write_mesh_ply(mesh: TriMesh, path):
    """Binary little-endian PLY mesh."""
    header = (
        "ply\nformat binary_little_endian 1.0\ncomment units meters\n"
        f"element vertex {len(mesh.vertices)}\nproperty double x\nproperty double y\nproperty double z\n"
        f"element face {len(mesh.faces)}\nproperty list uchar int vertex_indices\nend_header\n"
    )
    rec = np.zeros(len(mesh.faces), dtype=[("n", "u1"), ("i", "<i4", (3,))])
    rec["n"] = 3
    rec["i"] = mesh.faces
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(mesh.vertices.astype("<f8").tobytes())
        fh.write(rec.tobytes())


def write_mesh(mesh, path):
    if str(path).lower().endswith(".ply"):
        write_mesh_ply(mesh, path)
    else:
        write_obj(mesh, path)


def write_cloud_ply(cloud, path):
    """ASCII PLY with x y z [nx ny nz]; the source tag goes in a comment, and a
    per-point ``source`` index is added when labels are mixed."""
    if isinstance(cloud, FreeSpaceSet):
        pts, normals, tags = cloud.points, None, ["free-space"]
        labels = None
    else:
        pts, normals = cloud.points, cloud.normals
        tags = sorted(set(cloud.labels.tolist()), key=LABELS.index) or ["visual"]
        labels = cloud.labels if len(tags) > 1 else None
    lines = ["ply", "format ascii 1.0", "comment units meters", f"comment source {' '.join(tags)}"]
    lines.append(f"element vertex {len(pts)}")
    lines += [f"property double {a}" for a in "xyz"]
    cols = [pts]
    if normals is not None:
        lines += [f"property double n{a}" for a in "xyz"]
        cols.append(normals)
    if labels is not None:
        lines.append("property uchar source")
        cols.append(np.array([LABELS.index(x) for x in labels], float)[:, None])
    lines.append("end_header")
    table = np.concatenate(cols, axis=1) if len(pts) else np.zeros((0, sum(c.shape[1] for c in cols)))
    ncol_float = 6 if normals is not None else 3
    fmt = " ".join(["%.9g"] * ncol_float + (["%d"] if labels is not None else []))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
        if len(table):
            np.savetxt(fh, table, fmt=fmt)


def read_cloud(path) -> OrientedPointCloud:
    data, _, comments = read_ply(path)
    pts = np.stack([data["x"], data["y"], data["z"]], axis=1) if "x" in data else np.zeros((0, 3))
    normals = None
    if all(k in data for k in ("nx", "ny", "nz")):
        normals = np.stack([data["nx"], data["ny"], data["nz"]], axis=1)
        n = np.linalg.norm(normals, axis=1, keepdims=True)
        normals = normals / np.where(n > 0, n, 1.0)
    tag = "visual"
    for c in comments:
        if c.startswith("source "):
            tag = c.split()[1]
    if "source" in data:
        labels = np.array([LABELS[int(i)] for i in data["source"]])
    else:
        labels = tag if tag in LABELS else "visual"
    return OrientedPointCloud(pts, normals, labels)


def read_free_space(path) -> FreeSpaceSet:
    data, _, _ = read_ply(path)
    if "x" not in data:
        return FreeSpaceSet(np.zeros((0, 3)))
    return FreeSpaceSet(np.stack([data["x"], data["y"], data["z"]], axis=1))
