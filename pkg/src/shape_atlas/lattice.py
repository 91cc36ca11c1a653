"""Fibonacci sphere lattice, equirectangular projection, and the cached
assignment of projected lattice points onto a square grid."""

from __future__ import annotations

import hashlib
import logging
import math
import os
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .assignment import solve_geometric
from .errors import FormatError, NotPerfectSquare, NotUnitVector, SizeMismatch
from .formats import read_permutation, write_permutation

log = logging.getLogger(__name__)

LATTICE_VERSION = 1
GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def grid_side_of(n: int) -> int:
    side = math.isqrt(n) if n >= 0 else -1
    if n < 1 or side * side != n:
        raise NotPerfectSquare(f"{n} is not a positive perfect square")
    return side


def lattice_id(n: int) -> bytes:
    return hashlib.md5(f"fibonacci-sphere/v{LATTICE_VERSION}/n={n}".encode()).digest()


def fibonacci_sphere(n: int) -> np.ndarray:
    """``n`` near-uniform unit vectors on a golden-angle spiral, ordered by
    descending z: ``z = 1 - (2i + 1) / n``, ``phi = golden_angle * i``."""
    if n < 1:
        raise ValueError("n must be positive")
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = GOLDEN_ANGLE * i
    pts = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def generate_lattice(n: int) -> np.ndarray:
    """The sphere lattice: a Fibonacci sphere whose size is a perfect square."""
    grid_side_of(n)
    return fibonacci_sphere(n)


def equirect_project(s) -> np.ndarray:
    """Map unit vectors to ``(u, v)``: longitude and latitude rescaled to [0, 1].

    ``u = (atan2(y, x) + pi) / 2pi``, ``v = (asin(z) + pi/2) / pi``.
    Accepts one vector or an ``(n, 3)`` array.
    """
    s = np.asarray(s, dtype=np.float64)
    single = s.ndim == 1
    s = np.atleast_2d(s)
    if np.any(np.abs(np.linalg.norm(s, axis=1) - 1.0) >= 1e-6):
        raise NotUnitVector("equirect_project expects unit vectors")
    u = (np.arctan2(s[:, 1], s[:, 0]) + math.pi) / (2 * math.pi)
    u = np.where(u >= 1.0, 0.0, u)
    v = (np.arcsin(np.clip(s[:, 2], -1.0, 1.0)) + math.pi / 2) / math.pi
    out = np.column_stack([u, v])
    return out[0] if single else out


def grid_centers(side: int) -> np.ndarray:
    """Cell centers ``((col + .5) / side, (row + .5) / side)`` in row-major order."""
    c = (np.arange(side) + 0.5) / side
    col, row = np.meshgrid(c, c)
    return np.column_stack([col.ravel(), row.ravel()])


def compute_plane_permutation(coords, grid_side: int) -> np.ndarray:
    """Min-cost assignment of 2-D coords onto grid cells (squared distance).

    Returns ``cell[j]``, the row-major cell index of point ``j``.
    """
    coords = np.asarray(coords, np.float64)
    if len(coords) != grid_side * grid_side:
        raise SizeMismatch(f"{len(coords)} coords do not fill a {grid_side}x{grid_side} grid")
    return solve_geometric(coords, grid_centers(grid_side)).row_to_col


def default_cache_dir() -> Path:
    env = os.environ.get("SHAPE_ATLAS_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "shape_atlas"


@dataclass(frozen=True, eq=False)
class SphereLattice:
    sphere_points: np.ndarray
    equirect_coords: np.ndarray
    grid_side: int
    plane_permutation: np.ndarray  # sphere index -> row-major cell
    lattice_id: bytes

    @property
    def n(self) -> int:
        return len(self.sphere_points)

    @property
    def inverse_permutation(self) -> np.ndarray:
        """Row-major cell -> sphere index."""
        inv = np.empty(self.n, np.int64)
        inv[self.plane_permutation] = np.arange(self.n)
        return inv

    def cell_rc(self, j):
        cell = self.plane_permutation[j]
        return cell // self.grid_side, cell % self.grid_side


def build_lattice(n: int, cache_dir=None, use_cache: bool = True) -> SphereLattice:
    """Assemble the lattice, loading the grid permutation from the cache when present."""
    side = grid_side_of(n)
    pts = generate_lattice(n)
    coords = equirect_project(pts)
    lid = lattice_id(n)
    perm = None
    path = None
    if use_cache:
        path = Path(cache_dir or default_cache_dir()) / f"plane_perm_n{n}_v{LATTICE_VERSION}.bin"
        if path.exists():
            try:
                perm = read_permutation(path, lid)
                if len(perm) != n or not _is_permutation(perm):
                    perm = None
            except FormatError as exc:
                log.warning("ignoring bad permutation cache %s: %s", path, exc)
                perm = None
    if perm is None:
        perm = compute_plane_permutation(coords, side)
        if path is not None:
            try:
                write_permutation(path, perm, lid)
            except OSError as exc:
                log.warning("could not write permutation cache %s: %s", path, exc)
    for a in (pts, coords, perm):
        a.setflags(write=False)
    return SphereLattice(pts, coords, side, perm, lid)


@lru_cache(maxsize=8)
def get_lattice(n: int, cache_dir=None) -> SphereLattice:
    return build_lattice(n, cache_dir)


def _is_permutation(perm) -> bool:
    return bool(np.array_equal(np.sort(perm), np.arange(len(perm))))
