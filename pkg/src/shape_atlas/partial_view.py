"""Incomplete point clouds from single views of a mesh.

Cameras look at the object from a Fibonacci sphere; a z-buffer rasterizer
decides which faces own at least one pixel, and points are sampled from
those faces only. Camera frame follows the usual vision convention:
x right, y down, z forward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import NothingVisible
from .geom import PointCloud, TriangleMesh, sample_surface_with_faces
from .lattice import fibonacci_sphere

DEFAULT_RADIUS = 2.0
DEFAULT_FOV = 120.0
DEFAULT_RESOLUTION = (512, 512)
DEFAULT_VIEWS = 16
DEFAULT_PARTIAL_POINTS = 2048
LOOK_AT_JITTER = 0.1
NEAR = 1e-6


@dataclass(frozen=True, eq=False)
class Camera:
    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray = None
    fov_deg: float = DEFAULT_FOV
    resolution: tuple = DEFAULT_RESOLUTION  # (width, height)

    def __post_init__(self):
        pos = np.asarray(self.position, np.float64).reshape(3)
        tgt = np.asarray(self.look_at, np.float64).reshape(3)
        up = np.array([0.0, 0.0, 1.0]) if self.up is None else np.asarray(self.up, np.float64).reshape(3)
        if np.allclose(pos, tgt):
            raise ValueError("camera position coincides with look_at")
        if not 0 < self.fov_deg < 180:
            raise ValueError("fov_deg must lie in (0, 180)")
        w, h = (int(r) for r in self.resolution)
        if w < 1 or h < 1:
            raise ValueError("resolution must be positive")
        for name, val in (("position", pos), ("look_at", tgt), ("up", up)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "resolution", (w, h))

    @property
    def forward(self) -> np.ndarray:
        f = self.look_at - self.position
        return f / np.linalg.norm(f)

    @property
    def rotation(self) -> np.ndarray:
        """Rows are the camera x (right), y (down) and z (forward) axes in world space."""
        f = self.forward
        up = self.up
        if np.linalg.norm(np.cross(f, up)) < 1e-8:
            up = np.array([0.0, 1.0, 0.0]) if abs(f[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
        right = np.cross(f, up)
        right /= np.linalg.norm(right)
        down = np.cross(f, right)
        return np.stack([right, down, f])

    @property
    def focal(self) -> float:
        """Focal length in pixels, from the horizontal field of view."""
        return 0.5 * self.resolution[0] / math.tan(math.radians(self.fov_deg) / 2)

    def world_to_camera(self, points) -> np.ndarray:
        return (np.asarray(points, np.float64) - self.position) @ self.rotation.T

    def to_dict(self) -> dict:
        return {"position": self.position.tolist(), "look_at": self.look_at.tolist(),
                "up": self.up.tolist(), "fov_deg": float(self.fov_deg),
                "resolution": list(self.resolution)}


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """``y = R x + t``; used to carry meshes and clouds into a view's frame."""

    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, points):
        return np.asarray(points, np.float64) @ self.rotation.T + self.translation

    def apply_normals(self, normals):
        return np.asarray(normals, np.float64) @ self.rotation.T

    def invert(self, points):
        return (np.asarray(points, np.float64) - self.translation) @ self.rotation

    def apply_cloud(self, cloud: PointCloud) -> PointCloud:
        n = None if cloud.normals is None else self.apply_normals(cloud.normals)
        if n is not None:
            n = n / np.linalg.norm(n, axis=1, keepdims=True)
        return PointCloud(self.apply(cloud.points), n)

    def apply_mesh(self, mesh: TriangleMesh) -> TriangleMesh:
        return mesh.transformed(self.apply)

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}


@dataclass(frozen=True, eq=False)
class VisibilityMask:
    visible: np.ndarray  # bool per face
    pixel_face_ids: np.ndarray | None  # (height, width), -1 for background

    @property
    def visible_faces(self) -> np.ndarray:
        return np.flatnonzero(self.visible)


def sample_cameras(mesh_center, radius: float = DEFAULT_RADIUS, count: int = DEFAULT_VIEWS,
                   seed: int = 0, fov_deg: float = DEFAULT_FOV,
                   resolution=DEFAULT_RESOLUTION) -> list[Camera]:
    """Cameras on a Fibonacci sphere around ``mesh_center``, each aimed at the
    center plus a uniform offset in ``[-0.1, 0.1]^3``."""
    if count < 1:
        raise ValueError("count must be positive")
    if not radius > 0:
        raise ValueError("radius must be positive")
    center = np.asarray(mesh_center, np.float64).reshape(3)
    rng = np.random.default_rng(seed)
    offsets = rng.uniform(-LOOK_AT_JITTER, LOOK_AT_JITTER, (count, 3))
    dirs = fibonacci_sphere(count)
    return [Camera(center + radius * d, center + o, None, fov_deg, resolution)
            for d, o in zip(dirs, offsets)]


@numba.njit(cache=True)
def _raster(sx, sy, sz, faces, width, height):
    depth = np.full((height, width), np.inf)
    ids = np.full((height, width), -1, np.int64)
    for f in range(faces.shape[0]):
        a, b, c = faces[f, 0], faces[f, 1], faces[f, 2]
        za, zb, zc = sz[a], sz[b], sz[c]
        if za <= NEAR or zb <= NEAR or zc <= NEAR:
            continue
        xa, ya, xb, yb, xc, yc = sx[a], sy[a], sx[b], sy[b], sx[c], sy[c]
        area = (xb - xa) * (yc - ya) - (yb - ya) * (xc - xa)
        if area == 0.0:
            continue
        x0 = max(int(math.floor(min(xa, xb, xc) - 0.5)), 0)
        x1 = min(int(math.ceil(max(xa, xb, xc) - 0.5)), width - 1)
        y0 = max(int(math.floor(min(ya, yb, yc) - 0.5)), 0)
        y1 = min(int(math.ceil(max(ya, yb, yc) - 0.5)), height - 1)
        inv = 1.0 / area
        for py in range(y0, y1 + 1):
            cy = py + 0.5
            for px in range(x0, x1 + 1):
                cx = px + 0.5
                w0 = ((xb - cx) * (yc - cy) - (yb - cy) * (xc - cx)) * inv
                w1 = ((xc - cx) * (ya - cy) - (yc - cy) * (xa - cx)) * inv
                w2 = 1.0 - w0 - w1
                if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                    continue
                z = 1.0 / (w0 / za + w1 / zb + w2 / zc)
                if z < depth[py, px]:
                    depth[py, px] = z
                    ids[py, px] = f
    return ids


def project(cam: Camera, points) -> np.ndarray:
    """Pixel coordinates ``(x, y)`` and camera depth ``z`` of world points.

    Pixel ``(i, j)`` covers ``[i, i+1) x [j, j+1)`` with its sample at the center.
    """
    pc = cam.world_to_camera(points)
    w, h = cam.resolution
    z = pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        x = 0.5 * w + cam.focal * pc[:, 0] / z
        y = 0.5 * h + cam.focal * pc[:, 1] / z
    return np.column_stack([x, y, z])


def rasterize_visibility(mesh: TriangleMesh, cam: Camera) -> VisibilityMask:
    """Face-id z-buffer; a face is visible iff it wins at least one pixel.

    Depth test is strict less-than in face order, so the lower face index wins
    exact ties. Faces touching the near plane are skipped.
    """
    w, h = cam.resolution
    p = project(cam, mesh.vertices)
    ids = _raster(p[:, 0].copy(), p[:, 1].copy(), p[:, 2].copy(),
                  np.ascontiguousarray(mesh.faces), w, h)
    visible = np.zeros(len(mesh.faces), bool)
    visible[ids[ids >= 0]] = True
    if not visible.any():
        raise NothingVisible("no face is visible from this camera")
    return VisibilityMask(visible, ids)


def make_partial_cloud(mesh: TriangleMesh, cam: Camera, n_points: int = DEFAULT_PARTIAL_POINTS,
                       seed: int = 0, visibility: VisibilityMask | None = None):
    """Sample ``n_points`` from the visible faces, move them into the camera
    frame and center them at their centroid.

    Returns ``(cloud, transform, source_faces)``; ``transform`` maps world
    coordinates into the centered camera frame (apply it to the GT mesh).
    """
    vis = visibility if visibility is not None else rasterize_visibility(mesh, cam)
    world, faces = sample_surface_with_faces(mesh, n_points, seed, vis.visible_faces)
    R = cam.rotation
    cam_pts = (world.points - cam.position) @ R.T
    centroid = cam_pts.mean(axis=0)
    tf = RigidTransform(R, -cam.position @ R.T - centroid)
    return tf.apply_cloud(world), tf, faces


def save_face_id_png(path, vis: VisibilityMask):
    """False-color debug image of the face-id buffer (background black)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ids = vis.pixel_face_ids
    n = max(int(ids.max()) + 1, 1)
    # scatter neighbouring ids across the colormap
    hue = ((ids * 0.6180339887) % 1.0)
    rgb = plt.get_cmap("hsv")(hue)[..., :3]
    rgb[ids < 0] = 0.0
    plt.imsave(path, rgb)
    return n
