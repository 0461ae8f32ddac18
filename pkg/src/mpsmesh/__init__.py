"""Meshing for discrete fracture networks via maximal Poisson-disk sampling.

The package builds graded, conforming triangle meshes on fracture polygons
and tetrahedral meshes of the surrounding matrix volume.  Node spacing
follows a fracture-intersection-adapted sizing field, point sets are maximal
Poisson-disk samples of that field, and connectivity comes from Delaunay
triangulation with exactness repairs.
"""

from .errors import (
    AllCollinear,
    AllCoplanar,
    CollinearInput,
    ConformityError,
    DegenerateSimplex,
    DuplicatePoints,
    EmptyField,
    InfeasibleEdge,
    InvalidDomain,
    InvalidParams,
    MaxItersExceeded,
    MeshError,
    NonPlanarInput,
    ParseError,
    SegmentEndpointMissing,
    ValidationError,
)
from .streams import DEFAULT_SEED

__version__ = "0.1.0"

__all__ = [
    "AllCollinear",
    "AllCoplanar",
    "CollinearInput",
    "ConformityError",
    "DEFAULT_SEED",
    "DegenerateSimplex",
    "DuplicatePoints",
    "EmptyField",
    "InfeasibleEdge",
    "InvalidDomain",
    "InvalidParams",
    "MaxItersExceeded",
    "MeshError",
    "NonPlanarInput",
    "ParseError",
    "SegmentEndpointMissing",
    "ValidationError",
    "__version__",
]
