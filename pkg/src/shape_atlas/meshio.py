"""PLY / OBJ readers and a binary PLY writer."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .errors import FormatError
from .geom import PointCloud, TriangleMesh

log = logging.getLogger(__name__)

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _parse_ply_header(fh):
    if fh.readline().strip() != b"ply":
        raise FormatError("missing 'ply' magic")
    fmt = None
    elements = []
    while True:
        line = fh.readline()
        if not line:
            raise FormatError("unterminated PLY header")
        tok = line.decode("ascii", "replace").split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise FormatError("property before element")
            if tok[1] == "list":
                elements[-1][2].append((tok[4], ("list", tok[2], tok[3])))
            else:
                elements[-1][2].append((tok[2], tok[1]))
        elif tok[0] == "end_header":
            break
    if fmt not in ("ascii", "binary_little_endian", "binary_big_endian"):
        raise FormatError(f"unsupported PLY format {fmt!r}")
    return fmt, elements


def _read_ply(path):
    with open(path, "rb") as fh:
        fmt, elements = _parse_ply_header(fh)
        data = {}
        if fmt == "ascii":
            tokens = fh.read().split()
            pos = 0
            for name, count, props in elements:
                cols = {p: [] for p, _ in props}
                for _ in range(count):
                    for pname, ptype in props:
                        if isinstance(ptype, tuple):
                            n = int(tokens[pos])
                            cols[pname].append([float(t) for t in tokens[pos + 1:pos + 1 + n]])
                            pos += 1 + n
                        else:
                            cols[pname].append(float(tokens[pos]))
                            pos += 1
                data[name] = cols
        else:
            endian = "<" if fmt == "binary_little_endian" else ">"
            buf = fh.read()
            pos = 0
            for name, count, props in elements:
                has_list = any(isinstance(t, tuple) for _, t in props)
                if not has_list:
                    dt = np.dtype([(p, endian + _PLY_TYPES[t]) for p, t in props])
                    arr = np.frombuffer(buf, dtype=dt, count=count, offset=pos)
                    pos += dt.itemsize * count
                    data[name] = {p: arr[p].astype(np.float64) for p, _ in props}
                    continue
                cols = {p: [] for p, _ in props}
                for _ in range(count):
                    for pname, ptype in props:
                        if isinstance(ptype, tuple):
                            cdt = np.dtype(endian + _PLY_TYPES[ptype[1]])
                            idt = np.dtype(endian + _PLY_TYPES[ptype[2]])
                            n = int(np.frombuffer(buf, cdt, 1, pos)[0])
                            pos += cdt.itemsize
                            cols[pname].append(np.frombuffer(buf, idt, n, pos).tolist())
                            pos += idt.itemsize * n
                        else:
                            dt = np.dtype(endian + _PLY_TYPES[ptype])
                            cols[pname].append(float(np.frombuffer(buf, dt, 1, pos)[0]))
                            pos += dt.itemsize
                data[name] = cols
    return data


def _triangulate(polys):
    tris = []
    for poly in polys:
        poly = [int(i) for i in poly]
        for k in range(1, len(poly) - 1):
            tris.append((poly[0], poly[k], poly[k + 1]))
    return np.asarray(tris, np.int64).reshape(-1, 3)


def _unit_or_none(n):
    if n is None or len(n) == 0:
        return None
    norm = np.linalg.norm(n, axis=1)
    if np.any(norm < 1e-12):
        return None
    return n / norm[:, None]


def read_ply(path):
    """Return ``(points, normals_or_None, faces_or_None)``."""
    try:
        data = _read_ply(path)
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if "vertex" not in data:
        raise FormatError(f"{path}: no vertex element")
    v = data["vertex"]
    try:
        pts = np.column_stack([np.asarray(v[c], np.float64) for c in ("x", "y", "z")])
    except KeyError as exc:
        raise FormatError(f"{path}: vertex lacks {exc}") from exc
    normals = None
    if all(c in v for c in ("nx", "ny", "nz")):
        normals = np.column_stack([np.asarray(v[c], np.float64) for c in ("nx", "ny", "nz")])
    faces = None
    if "face" in data:
        f = data["face"]
        key = "vertex_indices" if "vertex_indices" in f else next(iter(f), None)
        if key is not None:
            faces = _triangulate(f[key])
    return pts, normals, faces


def read_obj(path):
    verts, normals, faces = [], [], []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for line in fh:
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "v":
                verts.append([float(t) for t in tok[1:4]])
            elif tok[0] == "vn":
                normals.append([float(t) for t in tok[1:4]])
            elif tok[0] == "f":
                idx = []
                for t in tok[1:]:
                    i = int(t.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                faces.append(idx)
    pts = np.asarray(verts, np.float64).reshape(-1, 3)
    nrm = np.asarray(normals, np.float64).reshape(-1, 3) if len(normals) == len(verts) and normals else None
    return pts, nrm, _triangulate(faces) if faces else None


def _read_any(path):
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".ply":
        return read_ply(path)
    if suffix == ".obj":
        return read_obj(path)
    raise FormatError(f"unsupported file type {suffix!r}")


def load_mesh(path) -> TriangleMesh:
    pts, _, faces = _read_any(path)
    if faces is None or len(faces) == 0:
        raise FormatError(f"{path}: no faces")
    return TriangleMesh.cleaned(pts, faces)


def load_cloud(path) -> PointCloud:
    """Load points (and normals when present) from PLY/OBJ.

    Files that carry faces but no per-vertex normals get area-weighted
    vertex normals from the faces.
    """
    pts, normals, faces = _read_any(path)
    normals = _unit_or_none(normals)
    if normals is None and faces is not None and len(faces):
        mesh = TriangleMesh.cleaned(pts, faces)
        acc = np.zeros_like(pts)
        weighted = mesh.face_normals * mesh.face_areas[:, None]
        for c in range(3):
            np.add.at(acc, mesh.faces[:, c], weighted)
        normals = _unit_or_none(acc)
    return PointCloud(pts, normals)


def write_ply(path, cloud: PointCloud, faces=None):
    """Binary little-endian PLY with float32 positions (and normals)."""
    pts = cloud.points
    fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
    if cloud.normals is not None:
        fields += [("nx", "<f4"), ("ny", "<f4"), ("nz", "<f4")]
    arr = np.empty(len(pts), dtype=fields)
    arr["x"], arr["y"], arr["z"] = pts[:, 0], pts[:, 1], pts[:, 2]
    if cloud.normals is not None:
        n = cloud.normals
        arr["nx"], arr["ny"], arr["nz"] = n[:, 0], n[:, 1], n[:, 2]
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {len(pts)}"]
    header += [f"property float {name}" for name, _ in fields]
    if faces is not None:
        header += [f"element face {len(faces)}", "property list uchar int vertex_indices"]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(arr.tobytes())
        if faces is not None:
            fdt = np.dtype([("n", "u1"), ("i", "<i4", (3,))])
            farr = np.empty(len(faces), dtype=fdt)
            farr["n"] = 3
            farr["i"] = faces
            fh.write(farr.tobytes())


def write_mesh_ply(path, mesh: TriangleMesh):
    write_ply(path, PointCloud(mesh.vertices), mesh.faces)
