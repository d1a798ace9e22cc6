"""Lift of the planar velocity estimate to 3D via a tilt calibration.

A constant misalignment angle between the radar sensing plane and the
plane of motion makes the body's vertical velocity proportional to the
planar speed.  The proportionality constant is calibrated against ground
truth, excluding low-speed samples, and then applied online as
v_z = kappa * ||v_planar||.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError

DEFAULT_SPEED_THRESHOLD = 3.0


@dataclass(frozen=True)
class KappaCalibration:
    """Vertical-velocity scale with its provenance."""

    kappa: float
    sample_count: int
    speed_threshold: float = DEFAULT_SPEED_THRESHOLD

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError("a valid calibration needs at least one sample")

    @staticmethod
    def disabled() -> "KappaCalibration":
        """No vertical lift (kappa 0); useful as a planar baseline."""
        return KappaCalibration(0.0, 1, DEFAULT_SPEED_THRESHOLD)


def lift(v_planar: np.ndarray, cal: KappaCalibration) -> np.ndarray:
    """3D body velocity [vx, vy, kappa * ||v||] from the planar estimate."""
    v = np.asarray(v_planar, dtype=float)
    return np.array([v[0], v[1], cal.kappa * math.hypot(v[0], v[1])])


def tilt_decompose(alpha: float, speed_planar: float) -> tuple[float, float]:
    """In-plane and vertical speed of a body whose sensing plane is tilted
    by alpha: (cos^2(a) * s, sin(a)cos(a) * s)."""
    if not abs(alpha) < math.pi / 2:
        raise ValueError(f"|alpha| must be below pi/2, got {alpha}")
    c = math.cos(alpha)
    return c * c * speed_planar, math.sin(alpha) * c * speed_planar


def calibrate_kappa(
    est_times: np.ndarray,
    est_velocities: np.ndarray,
    gt_times: np.ndarray,
    gt_vz: np.ndarray,
    threshold: float = DEFAULT_SPEED_THRESHOLD,
    max_time_offset: float = 0.0625,
) -> KappaCalibration:
    """Mean ratio of ground-truth vertical velocity to estimated planar speed.

    Estimates are paired with the nearest ground-truth sample within
    ``max_time_offset`` (half a scan period at 4 Hz by default); pairs
    whose planar speed is at or below ``threshold`` are excluded.  Raises
    CalibrationError when no pair qualifies.
    """
    et = np.asarray(est_times, dtype=float)
    ev = np.asarray(est_velocities, dtype=float).reshape(-1, 2)
    gt = np.asarray(gt_times, dtype=float)
    gz = np.asarray(gt_vz, dtype=float)
    if et.size != ev.shape[0] or gt.size != gz.size:
        raise ValueError("time and value arrays must have matching lengths")
    if gt.size == 0 or et.size == 0:
        raise CalibrationError("no samples to calibrate from")
    idx = np.searchsorted(gt, et)
    lo = np.clip(idx - 1, 0, gt.size - 1)
    hi = np.clip(idx, 0, gt.size - 1)
    nearest = np.where(np.abs(gt[lo] - et) <= np.abs(gt[hi] - et), lo, hi)
    aligned = np.abs(gt[nearest] - et) <= max_time_offset
    speeds = np.linalg.norm(ev, axis=1)
    qualifying = aligned & (speeds > threshold)
    n = int(np.count_nonzero(qualifying))
    if n == 0:
        raise CalibrationError(
            f"no time-aligned pairs with planar speed above {threshold} m/s"
        )
    forward = ev[qualifying, 0]
    if np.count_nonzero(forward < 0) > 0.05 * n:
        warnings.warn(
            "over 5% of qualifying samples have negative forward velocity; "
            "the single-direction-of-motion assumption may not hold",
            stacklevel=2,
        )
    kappa = float(np.mean(gz[nearest][qualifying] / speeds[qualifying]))
    return KappaCalibration(kappa, n, threshold)
