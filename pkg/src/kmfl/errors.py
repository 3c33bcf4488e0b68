"""Exception hierarchy shared by all kmfl modules."""


class KmflError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatchError(KmflError, ValueError):
    """Array shapes or dimensions are inconsistent."""


class NonFiniteError(KmflError, FloatingPointError):
    """A step produced NaN or Inf; carries the offending step index."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class NonPositiveParameterError(KmflError, ValueError):
    """A parameter that must be strictly positive is not."""


class ParameterError(KmflError, ValueError):
    """Invalid dynamics or experiment parameters."""


class SizeMismatchError(KmflError, ValueError):
    """Two point clouds that must have equal cardinality do not."""


class TooLargeError(KmflError, ValueError):
    """Input exceeds an exactness guard (e.g. assignment size cap)."""


class StepTooLargeError(KmflError, ValueError):
    """Moment ODE integration lost positive-definiteness of the covariance."""


class IndefiniteCoefficientsError(KmflError, ValueError):
    """Mixed Fisher coefficients (a, b, c) do not satisfy a*c > b**2 with a > 0."""


class EmptyDatasetError(KmflError, ValueError):
    """A dataset with zero samples was supplied where at least one is required."""


class BadMagicError(KmflError, ValueError):
    """IDX byte stream does not start with the expected magic number."""


class TruncatedPayloadError(KmflError, ValueError):
    """IDX byte stream ends before the payload announced in its header."""


class TrailingBytesError(KmflError, ValueError):
    """IDX byte stream has extra bytes after the announced payload."""


class ConfigError(KmflError, ValueError):
    """Experiment configuration file is missing, unreadable, or invalid."""
