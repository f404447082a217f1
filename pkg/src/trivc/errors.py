"""Exception types shared across the library."""


class TrivcError(Exception):
    """Base class for all library errors."""


class DegenerateError(TrivcError):
    """Input configuration admits no well-posed solution (collinear points,
    parallel rays, zero-size triangle, rank-deficient sample, ...)."""


class CheiralityError(TrivcError):
    """No pose candidate places the support points in front of both cameras."""


class ConfigurationError(TrivcError):
    """Invalid configuration, flags, or file contents. CLI exit code 2."""


class EstimationFailedError(TrivcError):
    """Robust estimation produced no usable hypothesis. CLI exit code 3."""
