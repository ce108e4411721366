"""INS/DVL sensor fusion with an error-state unscented Kalman filter whose
sigma points propagate through the full strapdown navigation algorithm."""

from .earth import EarthParams, GeodeticPosition, WGS84, earth_rate_ned, gravity_ned, radii_of_curvature, transport_rate
from .insdvl import (
    DvlMeasurement,
    ErrorState,
    FilterConfig,
    FilterDivergence,
    InsDvlUkf,
    SigmaSolution,
    build_sigma_solution,
    compensate_imu,
    dvl_innovation,
    predicted_innovation,
    propagate_sigma_linearized,
    propagate_sigma_nespm,
)
from .metrics import improvement, mrmse, vrmse, vrmse_avg
from .sim import CorruptionSpec, GroundTruth, Segment, TrajectorySpec, corrupt, simulate_trajectory
from .so3 import (
    EulerAngles,
    GimbalLockError,
    NearPiRotationError,
    attitude_minus,
    attitude_plus,
    dcm_to_euler,
    euler_to_dcm,
    exp_so3,
    log_so3,
    skew,
)
from .strapdown import ImuSample, NavSolution, na_cycle
from .ukf import (
    Gaussian,
    NotPositiveDefiniteError,
    SigmaSet,
    SingularInnovationError,
    UtWeights,
    compute_weights,
    generate_sigma_points,
    measurement_update,
    regenerate_sigma_points,
    repair_covariance,
    unscented_transform,
)

__version__ = "0.1.0"
