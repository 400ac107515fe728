# mpflex/core/exceptions.py
from typing import Sequence


class MpflexError(Exception):
    """Base class for every error raised by the library."""
    def __init__(self, message="Unexpected mpflex error."):
        self.message = message
        super().__init__(self.message)


class ProblemDimensionError(MpflexError):
    """Raised when arrays handed to a problem model do not fit together."""
    def __init__(self, message="Problem data has inconsistent dimensions."):
        super().__init__(message)


class NotPositiveDefiniteError(MpflexError):
    """Raised when a QP is not strictly convex on its equality nullspace."""
    def __init__(self, message="Quadratic term is not positive definite on the feasible subspace."):
        super().__init__(message)


class SolverError(MpflexError):
    """Raised on iteration limits or numerical breakdown inside a solver."""
    def __init__(self, message="Solver failed."):
        super().__init__(message)


class EmptyPolyhedronError(MpflexError):
    def __init__(self, message="Polyhedron is empty."):
        super().__init__(message)


class UnboundedPolyhedronError(MpflexError):
    def __init__(self, message="Polyhedron is unbounded."):
        super().__init__(message)


class NetworkError(MpflexError):
    """Raised for disconnected grids, bad bus references or singular susceptances."""
    def __init__(self, message="Invalid network."):
        super().__init__(message)


class InfeasibleParameterError(MpflexError):
    """Raised when the parametric LP has no solution at a parameter value."""
    def __init__(self, theta: Sequence[float], message: str | None = None):
        self.theta = tuple(float(v) for v in theta)
        formatted = ", ".join(f"{v:.4f}" for v in self.theta)
        super().__init__(message or f"Parameter ({formatted}) lies outside the dispatchable region.")


class RegionRetrievalError(MpflexError):
    def __init__(self, message="Critical region retrieval failed."):
        super().__init__(message)


class PolicyRecoveryError(MpflexError):
    """Raised when the active constraint system of a region is inconsistent."""
    def __init__(self, message="Could not recover a region policy."):
        super().__init__(message)


class AvgError(MpflexError):
    def __init__(self, message="Vertex generation did not terminate."):
        super().__init__(message)


class InstanceError(MpflexError):
    """Base class for problems with a market instance file."""


class InstanceParseError(InstanceError):
    def __init__(self, message="Instance file could not be parsed.", location: str | None = None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class InstanceValidationError(InstanceError):
    def __init__(self, message="Instance file failed validation.", field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)
