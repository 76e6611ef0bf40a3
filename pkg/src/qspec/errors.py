"""Exception hierarchy shared by the numerical modules and the CLI."""


class QspecError(Exception):
    """Base class. ``exit_code`` is what the CLI returns when this escapes."""

    exit_code = 2


class ValidationError(QspecError, ValueError):
    """Bad user input (CF string, lambda range, depth, ...)."""

    exit_code = 1


class CoefficientsExhausted(QspecError, IndexError):
    """A finite continued fraction was asked for a coefficient it does not have."""


class PrecisionExhausted(QspecError):
    """Working precision hit its cap, or an exact computation could not terminate."""


class CountMismatch(QspecError):
    """Band search found a different number of bands than the degree/T-matrix predicts."""


class ClassificationError(QspecError):
    """A band matched zero or two of the generating-band types."""
