"""Exception types raised across the package."""


class GrowthPathsError(Exception):
    """Base class for all package errors."""

    code = "error"


class DataError(GrowthPathsError, ValueError):
    """Malformed or inconsistent input data."""

    code = "data"


class DomainError(GrowthPathsError, ValueError):
    """A time point falls outside the basis domain."""

    code = "domain"


class InsufficientDataError(GrowthPathsError, ValueError):
    """Too few observations for the requested estimate."""

    code = "insufficient_data"


class DegeneracyError(GrowthPathsError, ArithmeticError):
    """A linear system or normalization collapsed (singular or zero norm).

    Inside the alternating fit this consumes one restart.
    """

    code = "degenerate"


class ConvergenceError(GrowthPathsError, ArithmeticError):
    """Iteration limit reached on every restart."""

    code = "nonconvergence"

    def __init__(self, message, objective_trace=None):
        super().__init__(message)
        self.objective_trace = list(objective_trace or [])
