"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class MinkowskiCapsError(Exception):
    """Base class for all package errors."""


class InputError(MinkowskiCapsError, ValueError):
    """Malformed or out-of-domain input (bad config, bad points file...)."""


class DomainError(InputError):
    """An operation was called outside its documented preconditions."""


class ResourceError(InputError):
    """A request would exceed a resource guard (e.g. grid level too deep)."""


class EvaluationError(MinkowskiCapsError, ValueError):
    """A user-supplied field produced a non-finite value."""


class ResolutionError(MinkowskiCapsError):
    """The quadrature grid is too coarse for the requested geometry."""


class InfeasibleEquilibriumError(MinkowskiCapsError):
    """No positive weights put the origin in the positive hull of the points.

    ``direction`` is a unit vector w with <w, p_j> >= 0 for every point,
    i.e. a certificate that all points lie in a closed half-space.
    """

    def __init__(self, message, direction=None):
        super().__init__(message)
        self.direction = direction


class FluxUnreachableError(MinkowskiCapsError):
    """A transition profile cannot produce the requested annulus flux."""


class ClosureError(MinkowskiCapsError):
    """Target areas violate the discrete closure / hemisphere conditions."""


class UnboundedIntersectionError(MinkowskiCapsError):
    """Half-space normals do not positively span R^3."""


class DegenerateHullError(MinkowskiCapsError):
    """The dual point set is degenerate (e.g. coplanar)."""


class EmptyBodyError(MinkowskiCapsError):
    """The half-space intersection has empty interior."""


class SolverError(MinkowskiCapsError):
    """Base class for Minkowski solver failures; carries the partial report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConvergenceError(SolverError):
    """The solver hit its iteration budget before reaching tolerance."""


class ConditioningError(SolverError):
    """Line search or continuation stalled before reaching tolerance."""


class NonSmoothDirectionError(MinkowskiCapsError):
    """Finite differences straddle a ridge of the polytope support function."""
