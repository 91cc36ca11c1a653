"""Shape Atlas construction and inversion.

A point cloud is matched one-to-one onto the sphere lattice, and every
sphere point's pixel (given by the lattice's grid permutation) stores::

    channel 0-2  offset p - s
    channel 3-5  normal of p
    channel 6    mask (1 = directly matched, 0 = propagated)
    channel 7    dummy, always 0
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .assignment import DEFAULT_K, solve_geometric
from .errors import DimensionMismatch, EmptyCloud, MissingNormals, SizeMismatch
from .formats import read_satl, write_satl
from .geom import PointCloud
from .lattice import SphereLattice

N_CHANNELS = 8
OFFSET = slice(0, 3)
NORMAL = slice(3, 6)
MASK = 6
DUMMY = 7
DUPLICATE_JITTER = 1e-9


@dataclass(frozen=True, eq=False)
class ShapeAtlas:
    data: np.ndarray  # (height, width, 8)
    lattice_id: bytes
    source_id: str = ""

    def __post_init__(self):
        d = np.asarray(self.data, np.float64)
        if d.ndim != 3 or d.shape[2] != N_CHANNELS:
            raise DimensionMismatch(f"atlas data must be (H, W, {N_CHANNELS}), got {d.shape}")
        object.__setattr__(self, "data", d)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def offsets(self):
        return self.data[..., OFFSET]

    @property
    def normals(self):
        return self.data[..., NORMAL]

    @property
    def mask(self):
        return self.data[..., MASK]

    def check(self):
        """Raise ValueError if any channel invariant is violated."""
        if not np.all(np.isfinite(self.data)):
            raise ValueError("atlas contains NaN/Inf")
        if not np.all((self.mask == 0) | (self.mask == 1)):
            raise ValueError("mask must be exactly 0 or 1")
        if np.any(self.data[..., DUMMY] != 0):
            raise ValueError("dummy channel must be 0")
        n = np.linalg.norm(self.normals, axis=-1)
        if np.any(np.abs(n - 1) > 1e-3):
            raise ValueError("normal channels must be unit length")


@dataclass(frozen=True, eq=False)
class AtlasPair:
    complete: ShapeAtlas
    incomplete: ShapeAtlas

    def __post_init__(self):
        if self.complete.data.shape != self.incomplete.data.shape:
            raise DimensionMismatch("complete and incomplete atlases differ in size")
        if self.complete.lattice_id != self.incomplete.lattice_id:
            raise DimensionMismatch("complete and incomplete atlases use different lattices")


def _jitter_duplicates(points, seed):
    """Nudge exact duplicates apart so assignment costs do not tie."""
    _, first, counts = np.unique(points, axis=0, return_index=True, return_counts=True)
    if np.all(counts == 1):
        return points
    dup = np.ones(len(points), bool)
    dup[first] = False
    rng = np.random.default_rng(seed)
    out = points.copy()
    out[dup] += rng.uniform(-DUPLICATE_JITTER, DUPLICATE_JITTER, (int(dup.sum()), 3))
    return out


def _pack(lattice, sphere_idx, offsets, normals, mask, source_id):
    data = np.zeros((lattice.n, N_CHANNELS))
    cells = lattice.plane_permutation[sphere_idx]
    data[cells, OFFSET] = offsets
    data[cells, NORMAL] = normals
    data[cells, MASK] = mask
    side = lattice.grid_side
    return ShapeAtlas(data.reshape(side, side, N_CHANNELS), lattice.lattice_id, source_id)


def _require_normals(cloud):
    if cloud.normals is None:
        raise MissingNormals("atlas construction needs per-point normals")
    return cloud.normals


def build_complete_atlas(cloud: PointCloud, lattice: SphereLattice, k: int = DEFAULT_K,
                         seed: int = 0, source_id: str = "") -> ShapeAtlas:
    """Match all N points to the N sphere points and pack the offsets."""
    if len(cloud) != lattice.n:
        raise SizeMismatch(f"cloud has {len(cloud)} points, lattice has {lattice.n}")
    normals = _require_normals(cloud)
    pts = cloud.points
    res = solve_geometric(_jitter_duplicates(pts, seed), lattice.sphere_points, k=k)
    sphere_idx = res.row_to_col
    offsets = pts - lattice.sphere_points[sphere_idx]
    return _pack(lattice, sphere_idx, offsets, normals, np.ones(len(pts)), source_id)


def subsample_indices(n: int, n_in: int) -> np.ndarray:
    """Stratified stride ``floor(i * n / n_in)`` over the lattice order."""
    return (np.arange(n_in) * n) // n_in


def build_partial_atlas(partial: PointCloud, lattice: SphereLattice, seed: int = 0,
                        k: int = DEFAULT_K, source_id: str = "") -> ShapeAtlas:
    """Match N_in points onto an N_in-point lattice subsample, then copy every
    matched pixel's values to the unmatched sphere points nearest to it."""
    n_in = len(partial)
    if n_in == 0:
        raise EmptyCloud("partial cloud is empty")
    if n_in > lattice.n:
        raise SizeMismatch(f"partial cloud has {n_in} points, lattice only {lattice.n}")
    normals = _require_normals(partial)
    sub = subsample_indices(lattice.n, n_in)
    sub_pts = lattice.sphere_points[sub]
    res = solve_geometric(_jitter_duplicates(partial.points, seed), sub_pts, k=k)
    # value rows indexed by subsample slot
    slot_offsets = np.empty((n_in, 3))
    slot_normals = np.empty((n_in, 3))
    slot_offsets[res.row_to_col] = partial.points - sub_pts[res.row_to_col]
    slot_normals[res.row_to_col] = normals

    _, nearest_slot = cKDTree(sub_pts).query(lattice.sphere_points, k=1)
    nearest_slot = np.asarray(nearest_slot, np.int64)
    nearest_slot[sub] = np.arange(n_in)
    mask = np.zeros(lattice.n)
    mask[sub] = 1.0
    all_idx = np.arange(lattice.n)
    return _pack(lattice, all_idx, slot_offsets[nearest_slot], slot_normals[nearest_slot],
                 mask, source_id)


def _check_dims(atlas: ShapeAtlas, lattice: SphereLattice):
    if atlas.height != lattice.grid_side or atlas.width != lattice.grid_side:
        raise DimensionMismatch(
            f"atlas is {atlas.height}x{atlas.width}, lattice grid is {lattice.grid_side}^2")
    if atlas.lattice_id != lattice.lattice_id:
        raise DimensionMismatch("atlas was built on a different lattice")


def invert_atlas(atlas: ShapeAtlas, lattice: SphereLattice, masked_only: bool = False) -> PointCloud:
    """Recover ``p = s + offset`` for every pixel, in row-major pixel order."""
    _check_dims(atlas, lattice)
    flat = atlas.data.reshape(-1, N_CHANNELS)
    sphere = lattice.sphere_points[lattice.inverse_permutation]
    pts = sphere + flat[:, OFFSET]
    normals = flat[:, NORMAL]
    if masked_only:
        keep = flat[:, MASK] > 0.5
        pts, normals = pts[keep], normals[keep]
    norm = np.linalg.norm(normals, axis=1, keepdims=True)
    if len(norm) and norm.min() < 1e-12:
        return PointCloud(pts)
    return PointCloud(pts, normals / norm)


def save_atlas(path, atlas: ShapeAtlas):
    write_satl(path, atlas.data, atlas.lattice_id)


def load_atlas(path, source_id: str = "") -> ShapeAtlas:
    data, lid = read_satl(path)
    if data.shape[2] != N_CHANNELS:
        raise DimensionMismatch(f"expected {N_CHANNELS} channels, file has {data.shape[2]}")
    return ShapeAtlas(data.astype(np.float64), lid, source_id)
