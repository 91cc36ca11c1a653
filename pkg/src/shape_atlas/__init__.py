"""Shape atlases: point clouds encoded as square multi-channel images by
optimal assignment onto a sphere lattice."""

from .assignment import AssignmentResult, solve_dense, solve_geometric, solve_sparse
from .atlas import (AtlasPair, ShapeAtlas, build_complete_atlas, build_partial_atlas,
                    invert_atlas, load_atlas, save_atlas)
from .errors import AtlasError
from .geom import PointCloud, TriangleMesh, normalize_center, sample_surface
from .lattice import SphereLattice, build_lattice, equirect_project, generate_lattice, get_lattice
from .metrics import chamfer_l1, chamfer_l2, evaluate, fscore

__version__ = "0.1.0"

__all__ = [
    "AssignmentResult", "solve_dense", "solve_geometric", "solve_sparse",
    "AtlasPair", "ShapeAtlas", "build_complete_atlas", "build_partial_atlas",
    "invert_atlas", "load_atlas", "save_atlas", "AtlasError",
    "PointCloud", "TriangleMesh", "normalize_center", "sample_surface",
    "SphereLattice", "build_lattice", "equirect_project", "generate_lattice", "get_lattice",
    "chamfer_l1", "chamfer_l2", "evaluate", "fscore",
]
