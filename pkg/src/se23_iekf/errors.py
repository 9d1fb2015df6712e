"""Exception hierarchy shared by the library and the command line."""


class EstimationError(Exception):
    """Base class for every error raised by this package."""

    category = "numeric"


class NumericError(EstimationError, ArithmeticError):
    category = "numeric"


class CutLocusError(NumericError, ValueError):
    """Rotation logarithm requested too close to an angle of pi."""


class SingularInnovationError(NumericError):
    """Innovation covariance is too ill-conditioned to invert."""


class ConfigError(EstimationError, ValueError):
    category = "config"


class DataError(EstimationError, ValueError):
    category = "data"
