"""Watertight primitive meshes centered on the origin, z up."""
from __future__ import annotations

import numpy as np

from .marching import contour_function
from .types import TriMesh


def icosphere(radius=1.0, subdivisions=3, center=(0.0, 0.0, 0.0)) -> TriMesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    v = np.array(verts) * radius + np.asarray(center, float)
    return TriMesh(v, np.array(faces))


def box(dx, dy, dz, center=(0.0, 0.0, 0.0)) -> TriMesh:
    h = np.array([dx, dy, dz], float) / 2.0
    corners = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], float)
    v = corners * h + np.asarray(center, float)
    # vertex id = 4*ix + 2*iy + iz
    faces = np.array([
        (0, 1, 3), (0, 3, 2),  # -x
        (4, 6, 7), (4, 7, 5),  # +x
        (0, 4, 5), (0, 5, 1),  # -y
        (2, 3, 7), (2, 7, 6),  # +y
        (0, 2, 6), (0, 6, 4),  # -z
        (1, 5, 7), (1, 7, 3),  # +z
    ])
    return TriMesh(v, faces)


def revolution(profile, segments=48) -> TriMesh:
    """Surface of revolution about z from a (radius, z) profile running from
    the bottom pole (radius 0) to the top pole (radius 0)."""
    profile = np.asarray(profile, float)
    rings = profile[1:-1]
    ang = 2 * np.pi * np.arange(segments) / segments
    ring_v = np.concatenate(
        [np.stack([r * np.cos(ang), r * np.sin(ang), np.full(segments, z)], axis=1) for r, z in rings]
    )
    bottom = np.array([[0.0, 0.0, profile[0, 1]]])
    top = np.array([[0.0, 0.0, profile[-1, 1]]])
    v = np.concatenate([bottom, ring_v, top])
    nr = len(rings)
    faces = []
    j = np.arange(segments)
    jn = (j + 1) % segments
    first = 1
    faces.append(np.stack([np.zeros(segments, int), first + jn, first + j], axis=1))
    for k in range(nr - 1):
        a = 1 + k * segments
        b = a + segments
        faces.append(np.stack([a + j, a + jn, b + jn], axis=1))
        faces.append(np.stack([a + j, b + jn, b + j], axis=1))
    last = 1 + (nr - 1) * segments
    topi = len(v) - 1
    faces.append(np.stack([np.full(segments, topi), last + j, last + jn], axis=1))
    return TriMesh(v, np.concatenate(faces))


def cylinder(radius, height, segments=48) -> TriMesh:
    n_side = max(2, int(np.ceil(height / (2 * np.pi * radius / segments))))
    cap = np.linspace(0, radius, 5)[1:]
    zs = np.linspace(-height / 2, height / 2, n_side + 1)
    profile = [(0.0, -height / 2)]
    profile += [(r, -height / 2) for r in cap]
    profile += [(radius, z) for z in zs[1:-1]]
    profile += [(r, height / 2) for r in cap[::-1]]
    profile += [(0.0, height / 2)]
    return revolution(profile, segments)


def capsule(radius, length, segments=48) -> TriMesh:
    """Cylinder of ``length`` (between hemisphere centers) capped by hemispheres."""
    n_arc = max(4, segments // 4)
    th = np.linspace(-np.pi / 2, 0, n_arc + 1)
    lower = [(radius * np.cos(a), -length / 2 + radius * np.sin(a)) for a in th]
    n_side = max(1, int(np.ceil(length / (2 * np.pi * radius / segments))))
    side = [(radius, z) for z in np.linspace(-length / 2, length / 2, n_side + 1)[1:-1]]
    upper = [(radius * np.cos(a), length / 2 - radius * np.sin(a)) for a in th[::-1]]
    profile = lower + side + upper
    profile[0] = (0.0, profile[0][1])
    profile[-1] = (0.0, profile[-1][1])
    return revolution(profile, segments)


def mug_sdf(radius=0.035, height=0.09, handle_radius=0.022, handle_thickness=0.006):
    """Signed distance of a solid cup body unioned with a half-torus handle on +x."""

    def sdf(p):
        p = np.asarray(p, float)
        x, y, z = p[:, 0], p[:, 1], p[:, 2]
        q = np.stack([np.hypot(x, y) - radius, np.abs(z) - height / 2], axis=1)
        body = np.minimum(np.maximum(q[:, 0], q[:, 1]), 0.0) + np.linalg.norm(np.maximum(q, 0.0), axis=1)
        hx = x - radius
        ring = np.hypot(np.hypot(hx, z) - handle_radius, y) - handle_thickness
        handle = np.where(hx > -handle_thickness, ring, np.inf)
        return np.minimum(body, handle)

    return sdf


def mug(radius=0.035, height=0.09, resolution=72) -> TriMesh:
    sdf = mug_sdf(radius, height)
    pad = 0.01
    lo = np.array([-radius - pad, -radius - pad, -height / 2 - pad])
    hi = np.array([radius + 0.022 + 0.006 + pad, radius + pad, height / 2 + pad])
    size = (hi - lo).max()
    hi = lo + size
    mesh, _ = contour_function(sdf, lo, hi, resolution)
    return mesh
