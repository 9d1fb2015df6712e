"""Left-invariant EKF on SE_2(3) with IMU and two position receivers, plus an MEKF baseline."""

__version__ = "0.1.0"

from .errors import CutLocusError, ConfigError, DataError, EstimationError, NumericError, SingularInnovationError
from .filters import FILTER_NAMES, FilterState, InvariantEKF, MultiplicativeEKF, make_filter
from .models import NoiseModel, ReceiverGeometry, TrajectoryConfig

__all__ = [
    "CutLocusError", "ConfigError", "DataError", "EstimationError", "NumericError", "SingularInnovationError",
    "FILTER_NAMES", "FilterState", "InvariantEKF", "MultiplicativeEKF", "make_filter",
    "NoiseModel", "ReceiverGeometry", "TrajectoryConfig",
]
