"""Exception and warning types shared across the package."""


class FacetFieldError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(FacetFieldError):
    """An argument violates a documented precondition."""


class ParseError(InvalidInput):
    """A point-cloud or mesh file could not be parsed.

    Carries the offending 1-based line number when known.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix += f"{path}:"
        if line is not None:
            prefix += f"{line}:"
        super().__init__(f"{prefix} {message}" if prefix else message)


class DegenerateNeighborhood(FacetFieldError):
    """All neighborhood points coincide; no normal direction exists."""


class InvalidFrame(FacetFieldError):
    """A half-plane frame is not orthonormal."""


class DegenerateDihedral(FacetFieldError):
    """The two wedge normals are (nearly) parallel; the edge direction is undefined."""


class DegenerateTrihedral(FacetFieldError):
    """At least one pair of corner normals is (nearly) parallel."""


class DivergenceError(FacetFieldError):
    """Optimization produced a non-finite loss."""

    def __init__(self, step, last_report=None):
        self.step = step
        self.last_report = last_report
        super().__init__(f"non-finite loss at step {step}")


class EmptyMesh(FacetFieldError):
    """Iso-surface extraction produced no geometry."""


class ProjectionUnstableWarning(UserWarning):
    """More than half of the projected samples failed to converge."""
