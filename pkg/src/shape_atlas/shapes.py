"""Procedural meshes used for tests, demos and the toy dataset."""

from __future__ import annotations

import numpy as np

from .geom import TriangleMesh

_ICO_FACES = np.array([
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
])


def icosphere(subdivisions: int = 2, radius: float = 1.0) -> TriangleMesh:
    """Subdivided icosahedron with ``20 * 4**subdivisions`` outward-facing faces."""
    t = (1.0 + 5 ** 0.5) / 2
    verts = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
             [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
             [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    verts = [np.array(v, float) / np.linalg.norm(v) for v in verts]
    faces = _ICO_FACES.tolist()
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
            new += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new
    return TriangleMesh(np.array(verts) * radius, np.array(faces))


def _grid_faces(nu, nv, wrap_u=False, wrap_v=False):
    faces = []
    cu = nu if wrap_u else nu - 1
    cv = nv if wrap_v else nv - 1
    for i in range(cu):
        for j in range(cv):
            a = i * nv + j
            b = ((i + 1) % nu) * nv + j
            c = ((i + 1) % nu) * nv + (j + 1) % nv
            d = i * nv + (j + 1) % nv
            faces += [[a, b, c], [a, c, d]]
    return np.array(faces)


def box(size=(1.0, 1.0, 1.0), divisions: int = 8) -> TriangleMesh:
    """Axis-aligned box centered at the origin, each face split into a
    ``divisions x divisions`` grid (``12 * divisions**2`` triangles)."""
    sx, sy, sz = (0.5 * np.asarray(size, float))
    g = np.linspace(-1.0, 1.0, divisions + 1)
    uu, vv = np.meshgrid(g, g, indexing="ij")
    uu, vv = uu.ravel(), vv.ravel()
    one = np.ones_like(uu)
    verts, faces = [], []
    base = _grid_faces(divisions + 1, divisions + 1)
    # (axis-aligned patch, outward normal sign) for the six sides
    patches = [
        (np.column_stack([one, uu, vv]), False), (np.column_stack([-one, uu, vv]), True),
        (np.column_stack([vv, one, uu]), False), (np.column_stack([vv, -one, uu]), True),
        (np.column_stack([uu, vv, one]), False), (np.column_stack([uu, vv, -one]), True),
    ]
    off = 0
    for pts, flip in patches:
        verts.append(pts * [sx, sy, sz])
        f = base[:, ::-1] if flip else base
        faces.append(f + off)
        off += len(pts)
    return TriangleMesh(np.vstack(verts), np.vstack(faces))


def torus(major: float = 0.7, minor: float = 0.3, nu: int = 48, nv: int = 24) -> TriangleMesh:
    """Torus around the z axis with ``2 * nu * nv`` faces."""
    u = np.linspace(0, 2 * np.pi, nu, endpoint=False)
    v = np.linspace(0, 2 * np.pi, nv, endpoint=False)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    r = major + minor * np.cos(vv)
    verts = np.column_stack([(r * np.cos(uu)).ravel(), (r * np.sin(uu)).ravel(),
                             (minor * np.sin(vv)).ravel()])
    return TriangleMesh(verts, _grid_faces(nu, nv, True, True))


def ellipsoid(axes=(1.0, 0.6, 0.4), subdivisions: int = 3) -> TriangleMesh:
    s = icosphere(subdivisions)
    return TriangleMesh(s.vertices * np.asarray(axes, float), s.faces)


def toy_meshes(count: int = 10, seed: int = 0) -> dict:
    """``count`` named meshes of at least 1600 faces with varied proportions."""
    rng = np.random.default_rng(seed)
    out = {}
    for i in range(count):
        kind = ("ellipsoid", "box", "torus")[i % 3]
        if kind == "ellipsoid":
            m = ellipsoid(rng.uniform(0.4, 1.0, 3), 4)
        elif kind == "box":
            m = box(rng.uniform(0.4, 1.0, 3), 12)
        else:
            m = torus(rng.uniform(0.5, 0.8), rng.uniform(0.15, 0.3), 48, 24)
        out[f"{kind}_{i:02d}"] = m
    return out
