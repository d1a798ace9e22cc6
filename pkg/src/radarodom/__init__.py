"""Direct radar-inertial odometry: SE(3) ego-motion from a spinning 2D
imaging radar and a 3-axis gyroscope, with a synthetic-data oracle."""

from .config import PipelineConfig, load_config, save_config
from .errors import (
    CalibrationError,
    DatasetFormatError,
    DegenerateScanError,
    MissingDataError,
)
from .evaluation import OdometryErrorReport, kitti_error, project_se2
from .geometry import (
    GyroSample,
    Pose2,
    Pose3,
    Rotation2,
    Rotation3,
    Trajectory,
    exp_so2,
    exp_so3,
    integrate_pose3,
    integrate_yaw,
    log_so3,
    se2_pose_at,
)
from .lift import KappaCalibration, calibrate_kappa, lift, tilt_decompose
from .localmap import LocalMap
from .pipeline import OdometryResult, estimate_bias, process_scan, run
from .radar import (
    CartesianPoints,
    PolarScan,
    RadarIntrinsics,
    doppler_correct,
    undistort_to_cartesian,
)
from .registration import (
    OptimizerSettings,
    RegistrationResult,
    doppler_prior_residual,
    estimate_velocity,
    score,
    score_and_gradient,
)
from .simulator import ScattererWorld, Segment, SimTrajectory

__version__ = "0.1.0"

__all__ = [
    "CalibrationError",
    "CartesianPoints",
    "DatasetFormatError",
    "DegenerateScanError",
    "GyroSample",
    "KappaCalibration",
    "LocalMap",
    "MissingDataError",
    "OdometryErrorReport",
    "OdometryResult",
    "OptimizerSettings",
    "PipelineConfig",
    "PolarScan",
    "Pose2",
    "Pose3",
    "RadarIntrinsics",
    "RegistrationResult",
    "Rotation2",
    "Rotation3",
    "ScattererWorld",
    "Segment",
    "SimTrajectory",
    "Trajectory",
    "calibrate_kappa",
    "doppler_correct",
    "doppler_prior_residual",
    "estimate_bias",
    "estimate_velocity",
    "exp_so2",
    "exp_so3",
    "integrate_pose3",
    "integrate_yaw",
    "kitti_error",
    "lift",
    "load_config",
    "log_so3",
    "process_scan",
    "project_se2",
    "run",
    "save_config",
    "score",
    "score_and_gradient",
    "se2_pose_at",
    "tilt_decompose",
    "undistort_to_cartesian",
]
