"""Exception hierarchy shared by the library and the CLI."""


class SpdStatError(Exception):
    """Base class for all errors raised by spdstat."""


class InvalidShapeError(SpdStatError, ValueError):
    """Array has the wrong shape for the requested operation."""


class InvalidArgumentError(SpdStatError, ValueError):
    """Argument value is outside the accepted domain."""


class NotPositiveDefiniteError(SpdStatError, ValueError):
    """Matrix failed the positive-definiteness check."""


class NumericFailure(SpdStatError, ArithmeticError):
    """A numerical kernel failed (eigensolver, non-finite values)."""


class NumericOverflowError(NumericFailure, OverflowError):
    """Result would exceed the float64 exponent range."""


class ConvergenceError(NumericFailure):
    """Iterative solver did not reach its tolerance.

    Attributes
    ----------
    last_iterate : ndarray
        Iterate at the time the solver gave up.
    residual : float
        Residual norm of ``last_iterate``.
    iterations : int
        Number of iterations performed.
    """

    def __init__(self, message, last_iterate=None, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
        self.iterations = iterations


class SingularCovarianceError(NumericFailure):
    """Covariance estimate is singular, so the quadratic statistic is undefined."""

    def __init__(self, message, rank=None, n=None, q=None):
        super().__init__(message)
        self.rank = rank
        self.n = n
        self.q = q


class BoundaryViolationError(NumericFailure):
    """A computed point left the positive definite cone."""


class VolumeFormatError(SpdStatError):
    """Tensor volume file is malformed.

    ``offset`` is the byte position at which the problem was detected.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(SpdStatError, ValueError):
    """Invalid pipeline or CLI configuration."""
