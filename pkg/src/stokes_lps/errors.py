"""Exception hierarchy.

Every error carries a short ``category`` string; the command line prints it
as the first token of its one-line failure message.
"""


class StokesLPSError(Exception):
    category = "internal"


class InvalidArgumentError(StokesLPSError, ValueError):
    category = "invalid-argument"


class DimensionMismatchError(InvalidArgumentError):
    category = "dimension-mismatch"


class OutOfDomainError(StokesLPSError, ValueError):
    category = "out-of-domain"


class UnsupportedDegreeError(StokesLPSError, ValueError):
    category = "unsupported-degree"


class SingularMatrixError(StokesLPSError, ArithmeticError):
    category = "singular-matrix"


class ConvergenceError(StokesLPSError, RuntimeError):
    category = "convergence-failure"

    def __init__(self, message, best_residual=float("nan"), iterations=0):
        super().__init__(message)
        self.best_residual = best_residual
        self.iterations = iterations


class StudyAbortedError(StokesLPSError):
    """A convergence study stopped early; ``table`` holds the finished rows."""

    category = "study-aborted"

    def __init__(self, message, table, cause):
        super().__init__(message)
        self.table = table
        self.cause = cause
        if isinstance(cause, StokesLPSError):
            self.category = cause.category
