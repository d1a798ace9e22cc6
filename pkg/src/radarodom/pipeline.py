"""Per-scan odometry orchestration.

Each scan is registered against the local map to estimate the planar body
velocity, the velocity is lifted to 3D, and poses are integrated at every
gyro timestamp in the scan interval.  The map is then updated with the
undistorted scan and recentered on the sensor.  Gyro bias is estimated
up front from stationary stretches (detected without velocity estimates
by correlating consecutive raw scans) and subtracted before integration.

The world frame is the body frame at the first scan's first azimuth; the
map grid stays axis-aligned with it and only translates when recentering.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import localmap, radar, registration
from .config import PipelineConfig
from .errors import DegenerateScanError, MissingDataError
from .geometry import (
    GyroSample,
    Pose2,
    Pose3,
    Rotation2,
    Trajectory,
    gyro_arrays,
    integrate_pose3,
    integrate_yaw,
)
from .lift import KappaCalibration, lift as lift_velocity
from .localmap import LocalMap
from .radar import PolarScan, RadarIntrinsics


@dataclass(frozen=True)
class BiasEstimate:
    """Mean gyro rate over detected standstill windows."""

    bias: np.ndarray
    sample_count: int
    window_seconds: float
    valid: bool


@dataclass
class OdometryState:
    """Working set carried between scans."""

    pose: Pose3
    map: LocalMap
    last_velocity: np.ndarray
    gyro_bias: np.ndarray
    last_scan_time: float
    last_scan: PolarScan | None = None


@dataclass(frozen=True)
class ScanEstimate:
    """Per-scan velocity trace entry."""

    timestamp: float
    velocity: np.ndarray  # planar body velocity (2,)
    velocity3: np.ndarray  # lifted body velocity (3,)
    score: float
    converged: bool
    coasted: bool  # True when registration failed and the previous velocity was reused


@dataclass(frozen=True)
class OdometryResult:
    trajectory: Trajectory
    estimates: list[ScanEstimate]
    bias: BiasEstimate


def planar_pose_of(pose: Pose3) -> Pose2:
    """Planar (yaw + xy) projection of a spatial pose."""
    m = pose.rotation.matrix
    yaw = math.atan2(m[1, 0], m[0, 0])
    return Pose2(Rotation2(yaw), pose.translation[:2].copy())


def estimate_bias(
    gyro,
    velocity_times: np.ndarray,
    velocities: np.ndarray,
    stationary_speed: float = 0.1,
    min_duration: float = 1.0,
) -> BiasEstimate:
    """Average the gyro over windows where the platform is stationary.

    A window is a contiguous run of velocity samples with speed below
    ``stationary_speed`` spanning at least ``min_duration`` seconds.  With
    no such window the bias is zero and the estimate is flagged invalid.
    """
    times, rates = gyro_arrays(gyro)
    vt = np.asarray(velocity_times, dtype=float)
    speeds = np.linalg.norm(np.asarray(velocities, dtype=float).reshape(-1, 2), axis=1)
    mask = np.zeros(times.size, dtype=bool)
    window_seconds = 0.0
    k = 0
    n = vt.size
    while k < n:
        if speeds[k] >= stationary_speed:
            k += 1
            continue
        j = k
        while j + 1 < n and speeds[j + 1] < stationary_speed:
            j += 1
        t0, t1 = vt[k], vt[j]
        if t1 - t0 >= min_duration:
            mask |= (times >= t0) & (times <= t1)
            window_seconds += t1 - t0
        k = j + 1
    count = int(mask.sum())
    if count == 0:
        warnings.warn(
            "no stationary window found; gyro bias assumed zero", stacklevel=2
        )
        return BiasEstimate(np.zeros(3), 0, 0.0, False)
    return BiasEstimate(rates[mask].mean(axis=0), count, window_seconds, True)


def scan_pair_ncc(a: PolarScan, b: PolarScan) -> float:
    """Zero-shift normalized cross-correlation of two scans' intensities."""
    x = a.intensities.ravel()
    y = b.intensities.ravel()
    x = x - x.mean()
    y = y - y.mean()
    denom = np.linalg.norm(x) * np.linalg.norm(y)
    if denom == 0:
        return 0.0
    return float((x @ y) / denom)


def estimate_bias_from_scans(
    scans, gyro, config: PipelineConfig | None = None
) -> BiasEstimate:
    """Bias from standstills detected by raw-scan correlation.

    Consecutive scans whose zero-shift correlation exceeds the configured
    threshold are treated as stationary (pseudo-speed 0); everything else
    as moving.  Velocity estimates are not needed, which breaks the
    bias-needs-velocity / velocity-needs-bias cycle at startup.
    """
    config = config or PipelineConfig()
    scans = list(scans)
    if len(scans) < 2:
        return BiasEstimate(np.zeros(3), 0, 0.0, False)
    times = np.array([s.scan_timestamp for s in scans[1:]])
    moving = 10.0 * max(config.stationary_speed, 1.0)
    pseudo = np.zeros((times.size, 2))
    for k in range(times.size):
        if scan_pair_ncc(scans[k], scans[k + 1]) <= config.stationary_ncc:
            pseudo[k, 0] = moving
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return estimate_bias(
            gyro,
            times,
            pseudo,
            stationary_speed=config.stationary_speed,
            min_duration=config.stationary_min_duration,
        )


def _corrected_gyro(gyro, bias: np.ndarray) -> list[GyroSample]:
    return [GyroSample(s.timestamp, s.rate - bias) for s in gyro]


def _integrate_interval(
    pose: Pose3,
    gyro_times: np.ndarray,
    gyro_rates: np.ndarray,
    t0: float,
    t1: float,
    v3: np.ndarray,
) -> tuple[Pose3, list[tuple[float, Pose3]]]:
    """Integrate from t0 to t1, emitting a pose at each gyro timestamp in
    (t0, t1) and at t1; rates at interval edges are interpolated."""
    if gyro_times[0] > t0 or gyro_times[-1] < t1:
        raise MissingDataError(
            f"gyro stream covers [{gyro_times[0]}, {gyro_times[-1]}] but the "
            f"scan interval [{t0}, {t1}] requires full coverage"
        )
    lo = int(np.searchsorted(gyro_times, t0, side="right"))
    hi = int(np.searchsorted(gyro_times, t1, side="left"))
    knots = [t0] + gyro_times[lo:hi].tolist() + [t1]
    rate_of = lambda t: np.array(
        [np.interp(t, gyro_times, gyro_rates[:, k]) for k in range(3)]
    )
    emitted: list[tuple[float, Pose3]] = []
    current = pose
    w_prev = rate_of(knots[0])
    for a, b in zip(knots[:-1], knots[1:]):
        dt = b - a
        if dt <= 0:
            continue
        w_cur = rate_of(b)
        current = integrate_pose3(current, w_prev, w_cur, v3, dt)
        emitted.append((b, current))
        w_prev = w_cur
    return current, emitted


def process_scan(
    state: OdometryState,
    scan: PolarScan,
    gyro,
    cal: KappaCalibration,
    intrinsics: RadarIntrinsics,
    config: PipelineConfig,
) -> tuple[OdometryState, list[tuple[float, Pose3]], ScanEstimate]:
    """Advance the odometry by one scan.

    Registration failure (degenerate scan or no convergence) coasts on the
    previous velocity and skips the map update; the scan estimate is
    flagged so downstream consumers can see the gap.
    """
    t0 = state.last_scan_time
    t1 = scan.scan_timestamp
    if scan.azimuth_timestamps[0] <= t0:
        raise ValueError(
            f"scan starting at {scan.azimuth_timestamps[0]} overlaps the "
            f"previous scan time {t0}"
        )
    gyro_times, gyro_rates = gyro_arrays(gyro)
    anchor = planar_pose_of(state.pose)
    v_init = state.last_velocity
    if config.rotate_velocity_seed:
        # Constant-velocity seed expressed in the new body frame.
        dyaw = integrate_yaw(gyro, t0, t1)
        v_init = Rotation2(-dyaw).apply(v_init)

    coasted = False
    converged = False
    score = 0.0
    result = None
    try:
        result = registration.estimate_velocity(
            state.map,
            scan,
            gyro,
            v_init,
            intrinsics,
            t0,
            config.optimizer_settings(),
            anchor=anchor,
            scan_prev=state.last_scan if config.doppler_lambda > 0 else None,
        )
        converged = result.converged
        score = result.score
    except DegenerateScanError:
        pass
    if result is None or not result.converged:
        velocity = state.last_velocity.copy()
        coasted = True
    else:
        velocity = result.velocity

    v3 = lift_velocity(velocity, cal)
    pose, emitted = _integrate_interval(state.pose, gyro_times, gyro_rates, t0, t1, v3)

    grid = state.map
    if not coasted:
        grid = localmap.update(grid, result.undistorted_points)
    grid = localmap.recenter(grid, pose.translation[:2])

    new_state = OdometryState(
        pose=pose,
        map=grid,
        last_velocity=velocity,
        gyro_bias=state.gyro_bias,
        last_scan_time=t1,
        last_scan=scan,
    )
    estimate = ScanEstimate(t1, velocity, v3, score, converged, coasted)
    return new_state, emitted, estimate


def run(
    scans,
    gyro,
    cal: KappaCalibration,
    intrinsics: RadarIntrinsics,
    config: PipelineConfig | None = None,
) -> OdometryResult:
    """Full odometry over a scan stream.

    The first scan initializes the map (undistorted with the configured
    initial velocity and the gyro yaw) and anchors the world frame at its
    first azimuth timestamp; every later scan is registered against the
    map built so far.  Returns the pose trajectory (one pose per gyro
    timestamp inside the processed span) and the per-scan velocity trace.
    """
    config = config or PipelineConfig()
    scans = list(scans)
    if not scans:
        empty = Trajectory(np.zeros(0), np.zeros((0, 3, 3)), np.zeros((0, 3)))
        return OdometryResult(empty, [], BiasEstimate(np.zeros(3), 0, 0.0, False))

    bias = estimate_bias_from_scans(scans, gyro, config)
    corrected = _corrected_gyro(gyro, bias.bias)
    gyro_times, gyro_rates = gyro_arrays(corrected)

    first = scans[0]
    t_start = float(first.azimuth_timestamps[0])
    v0 = np.array([config.initial_vx, config.initial_vy])
    v3_0 = lift_velocity(v0, cal)

    grid = LocalMap.create(
        np.zeros(2), config.map_extent, config.map_cell, config.map_decay
    )
    corrected_first = radar.doppler_correct(first, v0, intrinsics)
    points = radar.undistort_to_cartesian(
        corrected_first, corrected, v0, t_start, config.intensity_floor, None
    )
    grid = localmap.update(grid, points)

    pose, emitted = _integrate_interval(
        Pose3.identity(), gyro_times, gyro_rates, t_start, first.scan_timestamp, v3_0
    )
    grid = localmap.recenter(grid, pose.translation[:2])

    stamped: list[tuple[float, Pose3]] = [(t_start, Pose3.identity())] + emitted
    estimates: list[ScanEstimate] = [
        ScanEstimate(first.scan_timestamp, v0, v3_0, 0.0, False, True)
    ]
    state = OdometryState(
        pose=pose,
        map=grid,
        last_velocity=v0.astype(float),
        gyro_bias=bias.bias,
        last_scan_time=first.scan_timestamp,
        last_scan=first,
    )
    for scan in scans[1:]:
        state, emitted, estimate = process_scan(
            state, scan, corrected, cal, intrinsics, config
        )
        stamped.extend(emitted)
        estimates.append(estimate)
    return OdometryResult(Trajectory.from_poses(stamped), estimates, bias)
