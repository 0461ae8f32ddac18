"""Exception types raised across the package.

Everything derives from :class:`MeshError` so callers can catch broadly.
The CLI maps these onto exit codes (validation -> 1, parse/IO -> 2).
"""


class MeshError(Exception):
    """Base class for all mpsmesh errors."""


class InvalidParams(MeshError):
    """A sizing-parameter tuple violates its invariants (e.g. A outside (0,1))."""


class CollinearInput(MeshError):
    """All input vertices lie on a single line; no plane frame exists."""


class NonPlanarInput(MeshError):
    """Polygon vertices deviate from their best-fit plane beyond tolerance."""


class DegenerateSimplex(MeshError):
    """Simplex has zero measure; circumcenter/quality undefined."""


class AllCollinear(MeshError):
    """2D triangulation input is fully collinear."""


class AllCoplanar(MeshError):
    """3D triangulation input is fully coplanar."""


class DuplicatePoints(MeshError):
    """Triangulation input contains points closer than the duplicate tolerance."""


class EmptyField(MeshError):
    """Radius-field query on a field with no generating feature points."""


class InfeasibleEdge(MeshError):
    """A boundary edge is shorter than the minimum feature size (H/2)."""


class InvalidDomain(MeshError):
    """Domain box is malformed or does not contain the fracture network."""


class SegmentEndpointMissing(MeshError):
    """A constraint segment references an endpoint that is not a mesh node."""


class ConformityError(MeshError):
    """A constraint sub-segment failed to appear as a mesh edge after excavation."""


class IoError(MeshError):
    """A file could not be read or written."""


class ParseError(MeshError):
    """Input file is syntactically malformed or misses required keys."""


class ValidationError(MeshError):
    """Input file parsed but its contents violate the format contract."""


class MaxItersExceeded(MeshError):
    """An iterative repair loop hit its iteration cap before converging.

    The sliver-removal driver reports this as a soft failure (partial results
    are still written); the CLI exits with code 3.
    """
