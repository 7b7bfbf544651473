"""Exception types shared across the package."""


class MesmError(Exception):
    """Base class for all package errors."""


class DataValidationError(MesmError, ValueError):
    """Invalid input data or parameters (bad shapes, out-of-range values)."""


class NumericalError(MesmError, RuntimeError):
    """Numerical failure: non-convergence, factorization breakdown, degeneracy.

    Carries the best iterate found so far in ``best`` when an optimizer fails,
    so callers can inspect or salvage it.
    """

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best
