"""Per-scan planar velocity estimation by direct scan-to-map registration.

The objective is the intensity-weighted map correlation of the Doppler-
corrected, motion-undistorted scan, normalized by the total retained
intensity so thresholds are scan-independent.  It is maximized by
gradient ascent with Armijo backtracking, coarse-to-fine over a
downsampled map (with a matching strided scan).  The analytic gradient
chains the map's bilinear gradient through the undistortion transform and
the Doppler shift; the Doppler branch uses the row interpolant's slope as
the intensity-resampling Jacobian.

An optional robustness term penalizes disagreement between the candidate
velocity's per-azimuth radial component and radial velocities measured by
1D cross-correlation of consecutive scans' rows.  It is disabled by
default (weight 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import localmap, radar
from .errors import DegenerateScanError
from .geometry import Pose2, planar_motion_table
from .localmap import LocalMap
from .radar import CartesianPoints, PolarScan, RadarIntrinsics


@dataclass(frozen=True)
class OptimizerSettings:
    """Settings for the velocity optimizer and its optional prior term."""

    max_iterations: int = 50
    gradient_tolerance: float = 1e-3
    step_tolerance: float = 1e-4
    initial_step: float = 0.5
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    pyramid_levels: int = 2
    coarse_factor: int = 4
    coarse_stride: int = 2
    v_max: float = 50.0
    min_points: int = 100
    intensity_floor: float = 0.0
    doppler_lambda: float = 0.0
    doppler_window: int = 64
    doppler_ncc_floor: float = 0.5
    doppler_huber_width: float = 0.5


@dataclass(frozen=True)
class RegistrationResult:
    velocity: np.ndarray
    score: float
    iterations: int
    converged: bool
    undistorted_points: CartesianPoints


@dataclass(frozen=True)
class DopplerPriorResult:
    """Robust residual between measured and hypothesized radial velocities."""

    residual: float
    used_rows: int
    degraded: bool


def score(
    grid: LocalMap,
    scan: PolarScan,
    yaw_samples,
    v: np.ndarray,
    intrinsics: RadarIntrinsics,
    t_ref: float,
    anchor: Pose2 | None = None,
    intensity_floor: float = 0.0,
) -> float:
    """Normalized map-correlation score of the scan at candidate velocity v.

    Applies the Doppler correction, undistorts to Cartesian points in the
    map frame, and returns sum(intensity * map_sample) / sum(intensity)
    over the retained points (0 when nothing is retained).
    """
    corrected = radar.doppler_correct(scan, v, intrinsics)
    points = radar.undistort_to_cartesian(
        corrected, yaw_samples, v, t_ref, intensity_floor, anchor
    )
    total = float(points.intensities.sum())
    if total <= 0.0:
        return 0.0
    sampled = localmap.sample(grid, points.coordinates)
    return float(points.intensities @ sampled) / total


@njit(cache=True)
def _objective_kernel(  # pragma: no cover - exercised via _Objective
    intensities,
    delta,
    dirs,
    offs,
    mjac,
    beams,
    gain,
    ranges,
    map_values,
    origin_x,
    origin_y,
    inv_cell,
    floor,
    want_grad,
):
    """Fused single-pass evaluation over all scan bins.

    Resamples each row at (bin - delta), places the bin's fixed polar
    position with the row's rigid transform, bilinearly samples the map
    (NaN marks unobserved cells), and accumulates the score numerator and
    denominator with their velocity gradients, in fixed row-major order.
    """
    a_count, r_count = intensities.shape
    nx, ny = map_values.shape
    num = 0.0
    den = 0.0
    g0 = 0.0
    g1 = 0.0
    d0 = 0.0
    d1 = 0.0
    for a in range(a_count):
        da = delta[a]
        dir_x = dirs[a, 0]
        dir_y = dirs[a, 1]
        off_x = offs[a, 0]
        off_y = offs[a, 1]
        u_x = beams[a, 0]
        u_y = beams[a, 1]
        m00 = mjac[a, 0, 0]
        m01 = mjac[a, 0, 1]
        m10 = mjac[a, 1, 0]
        m11 = mjac[a, 1, 1]
        for b in range(r_count):
            src = b - da
            i0 = int(np.floor(src))
            frac = src - i0
            v0 = intensities[a, i0] if 0 <= i0 < r_count else 0.0
            v1 = intensities[a, i0 + 1] if 0 <= i0 + 1 < r_count else 0.0
            value = (1.0 - frac) * v0 + frac * v1
            slope = v1 - v0
            if value == 0.0 and slope == 0.0:
                continue
            if floor > 0.0 and value < floor:
                continue
            den += value
            neg_slope = -slope * gain
            d0 += neg_slope * u_x
            d1 += neg_slope * u_y
            x = ranges[b] * dir_x + off_x
            y = ranges[b] * dir_y + off_y
            gx = (x - origin_x) * inv_cell
            gy = (y - origin_y) * inv_cell
            ix = int(np.floor(gx))
            iy = int(np.floor(gy))
            if ix < 0 or ix + 1 > nx - 1 or iy < 0 or iy + 1 > ny - 1:
                continue
            fx = gx - ix
            fy = gy - iy
            c00 = map_values[ix, iy]
            c10 = map_values[ix + 1, iy]
            c01 = map_values[ix, iy + 1]
            c11 = map_values[ix + 1, iy + 1]
            beta = (
                c00 * (1.0 - fx) * (1.0 - fy)
                + c10 * fx * (1.0 - fy)
                + c01 * (1.0 - fx) * fy
                + c11 * fx * fy
            )
            if np.isnan(beta):
                continue
            num += value * beta
            if want_grad:
                bgx = ((c10 - c00) * (1.0 - fy) + (c11 - c01) * fy) * inv_cell
                bgy = ((c01 - c00) * (1.0 - fx) + (c11 - c10) * fx) * inv_cell
                g0 += neg_slope * u_x * beta + value * (m00 * bgx + m10 * bgy)
                g1 += neg_slope * u_y * beta + value * (m01 * bgx + m11 * bgy)
    return num, den, g0, g1, d0, d1


class _Objective:
    """Cached per-scan geometry for fast repeated score/gradient evaluation.

    Everything independent of the candidate velocity (per-azimuth yaw
    rotations, translation Jacobians, world beam directions) is computed
    once; each evaluation is then a single fused pass over the scan grid.
    """

    def __init__(
        self,
        grid: LocalMap,
        scan: PolarScan,
        yaw_samples,
        intrinsics: RadarIntrinsics,
        t_ref: float,
        anchor: Pose2 | None,
        intensity_floor: float,
        prior: tuple[np.ndarray, np.ndarray] | None = None,
        prior_weight: float = 0.0,
        huber_width: float = 0.5,
    ):
        self.grid = grid
        self.intensities = np.ascontiguousarray(scan.intensities)
        self.floor = intensity_floor
        self.gain = intrinsics.doppler_gain
        self.beams = np.stack(
            [np.cos(scan.azimuth_angles), np.sin(scan.azimuth_angles)], axis=1
        )
        theta, b = planar_motion_table(yaw_samples, t_ref, scan.azimuth_timestamps)
        cos_t, sin_t = np.cos(theta), np.sin(theta)
        dirs = np.stack(
            [
                cos_t * self.beams[:, 0] - sin_t * self.beams[:, 1],
                sin_t * self.beams[:, 0] + cos_t * self.beams[:, 1],
            ],
            axis=1,
        )
        if anchor is None:
            self.dirs = dirs
            self.motion_jac = np.ascontiguousarray(b)
            self.offset = np.zeros(2)
        else:
            m = anchor.rotation.matrix()
            self.dirs = np.ascontiguousarray(dirs @ m.T)
            self.motion_jac = np.ascontiguousarray(np.einsum("ij,ajk->aik", m, b))
            self.offset = np.asarray(anchor.translation, dtype=float)
        self.ranges = np.ascontiguousarray(scan.ranges())
        self.prior = prior
        self.prior_weight = prior_weight
        self.huber_width = huber_width

    def _prior_terms(self, v: np.ndarray, want_gradient: bool):
        v_meas, beams = self.prior
        err = v_meas - beams @ v
        w = self.huber_width
        small = np.abs(err) <= w
        loss = np.where(small, err * err, w * (2.0 * np.abs(err) - w))
        residual = float(loss.mean())
        if not want_gradient:
            return residual, None
        dloss = np.where(small, 2.0 * err, 2.0 * w * np.sign(err))
        grad = -(dloss[:, None] * beams).mean(axis=0)
        return residual, grad

    def evaluate(self, v: np.ndarray, want_gradient: bool):
        """Return (objective, plain score, gradient-or-None) at velocity v."""
        shifts = self.gain * (self.beams @ v)
        offsets = self.motion_jac @ v + self.offset
        num, den, g0, g1, d0, d1 = _objective_kernel(
            self.intensities,
            shifts,
            self.dirs,
            offsets,
            self.motion_jac,
            self.beams,
            self.gain,
            self.ranges,
            self.grid.masked_values(),
            self.grid.origin[0],
            self.grid.origin[1],
            1.0 / self.grid.cell_size,
            self.floor,
            want_gradient,
        )
        if den <= 0.0:
            zero_grad = np.zeros(2) if want_gradient else None
            return 0.0, 0.0, zero_grad
        value = num / den
        objective = value
        prior_grad = None
        if self.prior is not None and self.prior_weight > 0.0:
            residual, prior_grad = self._prior_terms(v, want_gradient)
            objective = value - self.prior_weight * residual
        if not want_gradient:
            return objective, value, None
        grad = (np.array([g0, g1]) - value * np.array([d0, d1])) / den
        if prior_grad is not None:
            grad = grad - self.prior_weight * prior_grad
        return objective, value, grad


def score_and_gradient(
    grid: LocalMap,
    scan: PolarScan,
    yaw_samples,
    v: np.ndarray,
    intrinsics: RadarIntrinsics,
    t_ref: float,
    anchor: Pose2 | None = None,
    intensity_floor: float = 0.0,
) -> tuple[float, np.ndarray]:
    """Score plus its analytic gradient with respect to the velocity."""
    objective = _Objective(
        grid, scan, yaw_samples, intrinsics, t_ref, anchor, intensity_floor
    )
    _, value, grad = objective.evaluate(np.asarray(v, dtype=float), True)
    return value, grad


def _clamp(v: np.ndarray, v_max: float) -> np.ndarray:
    speed = math.hypot(v[0], v[1])
    if speed > v_max:
        return v * (v_max / speed)
    return v


def _ascend(objective: _Objective, v0: np.ndarray, opts: OptimizerSettings):
    """Gradient ascent with Armijo backtracking from v0.

    Accepted steps never decrease the objective.  Converged means the
    gradient norm fell below tolerance or no acceptable step of at least
    the step tolerance exists.
    """
    v = _clamp(np.asarray(v0, dtype=float), opts.v_max)
    current, value, grad = objective.evaluate(v, True)
    iterations = 0
    converged = False
    step_start = opts.initial_step
    for _ in range(opts.max_iterations):
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < opts.gradient_tolerance:
            converged = True
            break
        direction = grad / grad_norm
        step = step_start
        accepted = False
        while step >= opts.step_tolerance:
            trial = _clamp(v + step * direction, opts.v_max)
            trial_obj, _, _ = objective.evaluate(trial, False)
            if trial_obj >= current + opts.armijo_c * step * grad_norm:
                accepted = True
                break
            step *= opts.backtrack_factor
        if not accepted:
            converged = True
            break
        # Carry the accepted scale into the next iteration (with headroom)
        # so near-optimum line searches stop re-walking from the top.
        step_start = min(opts.initial_step, 2.0 * step)
        v = trial
        current, value, grad = objective.evaluate(v, True)
        iterations += 1
    return v, value, iterations, converged


def _strided_scan(scan: PolarScan, stride: int) -> PolarScan:
    if stride <= 1:
        return scan
    a, r = scan.intensities.shape
    if a // stride < 2 or r // stride < 2:
        return scan
    return PolarScan(
        scan.intensities[::stride, ::stride],
        scan.azimuth_timestamps[::stride],
        scan.azimuth_angles[::stride],
        scan.range_resolution * stride,
        scan.min_range,
    )


def estimate_velocity(
    grid: LocalMap,
    scan: PolarScan,
    yaw_samples,
    v_init: np.ndarray,
    intrinsics: RadarIntrinsics,
    t_ref: float,
    opts: OptimizerSettings | None = None,
    anchor: Pose2 | None = None,
    scan_prev: PolarScan | None = None,
) -> RegistrationResult:
    """Maximize the registration score over the planar body velocity.

    Runs coarse-to-fine (downsampled map with a strided scan, then full
    resolution) from the caller's initial velocity, typically the previous
    scan's estimate.  The returned points are the scan undistorted at the
    optimum, ready for the map update.  Raises DegenerateScanError when
    fewer than ``min_points`` bins pass the intensity floor.
    """
    opts = opts or OptimizerSettings()
    v = np.asarray(v_init, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"v_init must be finite, got {v!r}")
    usable = int(np.count_nonzero(scan.intensities > opts.intensity_floor))
    if usable < opts.min_points:
        raise DegenerateScanError(
            f"scan has {usable} bins above intensity floor "
            f"{opts.intensity_floor}; need at least {opts.min_points}"
        )
    prior = None
    if opts.doppler_lambda > 0.0 and scan_prev is not None:
        measured = radial_velocity_measurements(
            scan_prev, scan, intrinsics, opts.doppler_window, opts.doppler_ncc_floor
        )
        if measured is not None:
            prior = measured

    levels: list[tuple[LocalMap, PolarScan, RadarIntrinsics]] = []
    if opts.pyramid_levels >= 2:
        coarse_scan = _strided_scan(scan, opts.coarse_stride)
        stride = round(coarse_scan.range_resolution / scan.range_resolution)
        coarse_intr = RadarIntrinsics(
            intrinsics.doppler_gain / stride,
            intrinsics.range_resolution * stride,
            intrinsics.min_range,
        )
        levels.append((localmap.downsample(grid, opts.coarse_factor), coarse_scan, coarse_intr))
    levels.append((grid, scan, intrinsics))

    total_iterations = 0
    converged = False
    value = 0.0
    for level_map, level_scan, level_intr in levels:
        objective = _Objective(
            level_map,
            level_scan,
            yaw_samples,
            level_intr,
            t_ref,
            anchor,
            opts.intensity_floor,
            prior,
            opts.doppler_lambda,
            opts.doppler_huber_width,
        )
        v, value, iterations, converged = _ascend(objective, v, opts)
        total_iterations += iterations

    corrected = radar.doppler_correct(scan, v, intrinsics)
    points = radar.undistort_to_cartesian(
        corrected, yaw_samples, v, t_ref, opts.intensity_floor, anchor
    )
    return RegistrationResult(v, value, total_iterations, converged, points)


def radial_velocity_measurements(
    scan_prev: PolarScan,
    scan: PolarScan,
    intrinsics: RadarIntrinsics,
    window: int = 64,
    ncc_floor: float = 0.5,
) -> tuple[np.ndarray, np.ndarray] | None:
    """Per-azimuth radial velocities from row-to-row range shifts.

    For each azimuth the integer shift maximizing the normalized cross-
    correlation between the two scans' rows is converted to a radial
    velocity via the range resolution and the scan spacing (per-scan
    Doppler shifts cancel between consecutive scans at constant velocity).
    Rows whose correlation peak falls below ``ncc_floor`` are skipped;
    returns None when every row is skipped.
    """
    if scan_prev.intensities.shape != scan.intensities.shape:
        raise ValueError("consecutive scans must share the same azimuth/range grid")
    dt = scan.scan_timestamp - scan_prev.scan_timestamp
    if dt <= 0:
        raise ValueError("scans must be in temporal order")
    prev = scan_prev.intensities - scan_prev.intensities.mean(axis=1, keepdims=True)
    cur = scan.intensities - scan.intensities.mean(axis=1, keepdims=True)
    norm = np.linalg.norm(prev, axis=1) * np.linalg.norm(cur, axis=1)
    a, r = prev.shape
    window = min(window, r - 1)
    shifts = np.arange(-window, window + 1)
    corr = np.full((a, shifts.size), -np.inf)
    for k, s in enumerate(shifts):
        if s >= 0:
            prod = (prev[:, s:] * cur[:, : r - s]).sum(axis=1)
        else:
            prod = (prev[:, :s] * cur[:, -s:]).sum(axis=1)
        corr[:, k] = prod
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.where(norm[:, None] > 0, corr / norm[:, None], -np.inf)
    best = np.argmax(corr, axis=1)
    peak = corr[np.arange(a), best]
    confident = peak >= ncc_floor
    if not np.any(confident):
        return None
    # corr peaks at s with cur(b) = prev(b + s): content moved down-range
    # by s bins, i.e. the body approaches that azimuth at s*dr/dt.
    v_radial = shifts[best] * scan.range_resolution / dt
    beams = np.stack([np.cos(scan.azimuth_angles), np.sin(scan.azimuth_angles)], axis=1)
    return v_radial[confident], beams[confident]


def doppler_prior_residual(
    scan_prev: PolarScan,
    scan: PolarScan,
    v: np.ndarray,
    intrinsics: RadarIntrinsics,
    window: int = 64,
    ncc_floor: float = 0.5,
    huber_width: float = 0.5,
) -> DopplerPriorResult:
    """Robust (Huber) mean-squared disagreement between measured radial
    velocities and the hypothesis ``v``.

    Returns residual 0 with the degraded flag set when no azimuth yields a
    confident shift measurement.
    """
    measured = radial_velocity_measurements(scan_prev, scan, intrinsics, window, ncc_floor)
    if measured is None:
        return DopplerPriorResult(0.0, 0, True)
    v_meas, beams = measured
    err = v_meas - beams @ np.asarray(v, dtype=float)
    w = huber_width
    small = np.abs(err) <= w
    loss = np.where(small, err * err, w * (2.0 * np.abs(err) - w))
    return DopplerPriorResult(float(loss.mean()), int(v_meas.size), False)
