"""Point clouds, triangle meshes, surface sampling and normalization."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFace, EmptyCloud, EmptyMesh, MissingNormals, SizeMismatch

log = logging.getLogger(__name__)

DEGENERATE_AREA = 1e-12


def _as_points(a, name="points"):
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        return a.reshape(0, 3)
    if a.ndim != 2 or a.shape[1] != 3:
        raise SizeMismatch(f"{name} must have shape (n, 3), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contain NaN or Inf")
    return a


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        pts = _as_points(self.points)
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = _as_points(self.normals, "normals")
            if len(nrm) != len(pts):
                raise SizeMismatch("normals and points differ in length")
            if len(nrm) and np.max(np.abs(np.linalg.norm(nrm, axis=1) - 1.0)) > 1e-6:
                raise ValueError("normals must be unit length")
            object.__setattr__(self, "normals", nrm)
        self.points.setflags(write=False)
        if self.normals is not None:
            self.normals.setflags(write=False)

    def __len__(self):
        return len(self.points)

    @property
    def has_normals(self) -> bool:
        return self.normals is not None

    def require_normals(self) -> np.ndarray:
        if self.normals is None:
            raise MissingNormals("point cloud has no normals")
        return self.normals

    def subset(self, idx) -> "PointCloud":
        return PointCloud(self.points[idx], None if self.normals is None else self.normals[idx])


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Indexed triangle mesh. ``face_normals`` follow right-hand winding."""

    vertices: np.ndarray
    faces: np.ndarray
    face_normals: np.ndarray = field(init=False)

    def __post_init__(self):
        v = _as_points(self.vertices, "vertices")
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "face_normals", compute_face_normals(v, f))
        for a in (self.vertices, self.faces, self.face_normals):
            a.setflags(write=False)

    @classmethod
    def cleaned(cls, vertices, faces, min_area=DEGENERATE_AREA) -> "TriangleMesh":
        """Build a mesh, dropping faces with area below ``min_area``."""
        v = _as_points(vertices, "vertices")
        f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        areas = triangle_areas(v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]) if len(f) else np.zeros(0)
        keep = areas >= min_area
        if not keep.all():
            log.warning("dropped %d degenerate faces", int((~keep).sum()))
        return cls(v, f[keep])

    @property
    def triangles(self) -> np.ndarray:
        """(F, 3, 3) corner coordinates."""
        return self.vertices[self.faces]

    @property
    def face_areas(self) -> np.ndarray:
        t = self.triangles
        return triangle_areas(t[:, 0], t[:, 1], t[:, 2])

    @property
    def surface_area(self) -> float:
        return float(self.face_areas.sum())

    def transformed(self, fn) -> "TriangleMesh":
        return TriangleMesh(fn(self.vertices), self.faces)


@dataclass(frozen=True)
class NormalizationTransform:
    """``y = (x + translation) * scale``."""

    translation: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "translation", np.asarray(self.translation, np.float64).reshape(3))

    def apply(self, points):
        return (np.asarray(points, np.float64) + self.translation) * self.scale

    def invert(self, points):
        return np.asarray(points, np.float64) / self.scale - self.translation

    def apply_cloud(self, cloud: PointCloud) -> PointCloud:
        return PointCloud(self.apply(cloud.points), cloud.normals)

    def invert_cloud(self, cloud: PointCloud) -> PointCloud:
        return PointCloud(self.invert(cloud.points), cloud.normals)

    def apply_mesh(self, mesh: TriangleMesh) -> TriangleMesh:
        return mesh.transformed(self.apply)


def triangle_areas(a, b, c):
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=-1)


def compute_face_normals(vertices, faces=None) -> np.ndarray:
    """Unit normals ``normalize(cross(v1 - v0, v2 - v0))``.

    Accepts either a TriangleMesh or raw ``(vertices, faces)`` arrays.
    """
    if isinstance(vertices, TriangleMesh):
        vertices, faces = vertices.vertices, vertices.faces
    v = np.asarray(vertices, np.float64)
    f = np.asarray(faces, np.int64).reshape(-1, 3)
    if len(f) == 0:
        return np.zeros((0, 3))
    cr = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    norm = np.linalg.norm(cr, axis=1)
    bad = 0.5 * norm < DEGENERATE_AREA
    if bad.any():
        raise DegenerateFace(f"{int(bad.sum())} faces have area below {DEGENERATE_AREA}")
    return cr / norm[:, None]


def sample_surface(mesh: TriangleMesh, count: int, seed: int = 0, face_subset=None) -> PointCloud:
    """Area-weighted uniform samples; each point carries its face normal.

    ``face_subset`` restricts sampling to the given face indices.
    """
    cloud, _ = sample_surface_with_faces(mesh, count, seed, face_subset)
    return cloud


def sample_surface_with_faces(mesh, count, seed=0, face_subset=None):
    """Like :func:`sample_surface` but also returns the source face of every point."""
    if count < 1:
        raise ValueError("count must be positive")
    faces = np.arange(len(mesh.faces)) if face_subset is None else np.asarray(face_subset, np.int64)
    if len(faces) == 0:
        raise EmptyMesh("mesh has no faces to sample")
    rng = np.random.default_rng(seed)
    tri = mesh.triangles[faces]
    cdf = np.cumsum(triangle_areas(tri[:, 0], tri[:, 1], tri[:, 2]))
    pick = np.searchsorted(cdf, rng.random(count) * cdf[-1], side="right")
    pick = np.minimum(pick, len(faces) - 1)
    r1 = np.sqrt(rng.random(count))
    r2 = rng.random(count)
    a, b, c = tri[pick, 0], tri[pick, 1], tri[pick, 2]
    pts = (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c
    src = faces[pick]
    return PointCloud(pts, mesh.face_normals[src]), src


def normalize_center(cloud: PointCloud, mode: str = "unit_ball"):
    """Center at the centroid and, in ``unit_ball`` mode, scale max norm to 1.

    Returns the normalized cloud and the transform that produced it.
    """
    if len(cloud) == 0:
        raise EmptyCloud("cannot normalize an empty cloud")
    centroid = cloud.points.mean(axis=0)
    if mode == "centroid_only":
        scale = 1.0
    elif mode == "unit_ball":
        radius = np.linalg.norm(cloud.points - centroid, axis=1).max()
        scale = 1.0 / radius if radius > 0 else 1.0
    else:
        raise ValueError(f"unknown normalization mode {mode!r}")
    tf = NormalizationTransform(-centroid, scale)
    return tf.apply_cloud(cloud), tf
