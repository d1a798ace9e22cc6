"""Polar scan container, Doppler range correction, and motion undistortion.

A scan is an azimuth-by-range intensity matrix with one timestamp per
azimuth row.  Doppler correction shifts each row's content up-range by
``doppler_gain * (v . beam)`` bins (a positive radial velocity toward the
scene makes raw returns appear too close; the correction moves them back
out).  Undistortion converts retained bins to Cartesian points in the
body frame at a caller-supplied anchor time, applying the per-azimuth
planar motion accrued since that anchor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .geometry import Pose2


@dataclass(frozen=True)
class RadarIntrinsics:
    """Sensor constants: Doppler gain (bins per m/s, signed) and range grid."""

    doppler_gain: float
    range_resolution: float
    min_range: float = 0.0

    def __post_init__(self):
        if not self.range_resolution > 0:
            raise ValueError(f"range_resolution must be positive, got {self.range_resolution}")


@dataclass(frozen=True)
class PolarScan:
    """One radar sweep: intensities (A, R), per-azimuth timestamps and angles."""

    intensities: np.ndarray
    azimuth_timestamps: np.ndarray
    azimuth_angles: np.ndarray
    range_resolution: float
    min_range: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "intensities", np.asarray(self.intensities, dtype=float))
        object.__setattr__(
            self, "azimuth_timestamps", np.asarray(self.azimuth_timestamps, dtype=float)
        )
        object.__setattr__(self, "azimuth_angles", np.asarray(self.azimuth_angles, dtype=float))
        a, r = self.intensities.shape
        if a < 2 or r < 2:
            raise ValueError(f"scan must be at least 2x2, got {self.intensities.shape}")
        if self.azimuth_timestamps.shape != (a,) or self.azimuth_angles.shape != (a,):
            raise ValueError("azimuth timestamps/angles must have one entry per row")
        if np.any(np.diff(self.azimuth_timestamps) <= 0):
            raise ValueError("azimuth timestamps must be strictly increasing")
        if np.any(np.diff(self.azimuth_angles) <= 0):
            raise ValueError("azimuth angles must be strictly increasing over the sweep")
        if self.azimuth_angles[0] < 0 or self.azimuth_angles[-1] >= 2 * np.pi:
            raise ValueError("azimuth angles must lie in [0, 2*pi)")
        if not np.all(np.isfinite(self.intensities)) or np.any(self.intensities < 0):
            raise ValueError("intensities must be finite and non-negative")
        if not self.range_resolution > 0:
            raise ValueError("range_resolution must be positive")

    @property
    def scan_timestamp(self) -> float:
        """Scan time, defined as the last azimuth timestamp."""
        return float(self.azimuth_timestamps[-1])

    @property
    def azimuth_count(self) -> int:
        return self.intensities.shape[0]

    @property
    def range_bins(self) -> int:
        return self.intensities.shape[1]

    def ranges(self) -> np.ndarray:
        """Range in meters at each bin center."""
        return self.min_range + np.arange(self.range_bins) * self.range_resolution


@dataclass(frozen=True)
class CartesianPoints:
    """Undistorted scan returns: (N, 2) coordinates with their intensities."""

    coordinates: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coordinates", np.asarray(self.coordinates, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "intensities", np.asarray(self.intensities, dtype=float).reshape(-1))
        if self.coordinates.shape[0] != self.intensities.shape[0]:
            raise ValueError("coordinate and intensity counts differ")
        if not (np.all(np.isfinite(self.coordinates)) and np.all(np.isfinite(self.intensities))):
            raise ValueError("points must be finite")

    def __len__(self) -> int:
        return int(self.intensities.size)


def resample_rows_with_slope(
    values: np.ndarray, shifts: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Row shift by linear interpolation, plus the interpolant's slope.

    Output bin b reads the input at b - shift; source positions outside
    [0, R) contribute zero.  The slope (intensity per bin, piecewise
    constant between knots) is the derivative of the resampled value with
    respect to source position.
    """
    a, r = values.shape
    src = np.arange(r, dtype=float)[None, :] - np.asarray(shifts, dtype=float)[:, None]
    i0 = np.floor(src).astype(np.int64)
    frac = src - i0
    i1 = i0 + 1
    valid0 = (i0 >= 0) & (i0 < r)
    valid1 = (i1 >= 0) & (i1 < r)
    rows = np.arange(a)[:, None]
    v0 = np.where(valid0, values[rows, np.clip(i0, 0, r - 1)], 0.0)
    v1 = np.where(valid1, values[rows, np.clip(i1, 0, r - 1)], 0.0)
    return (1.0 - frac) * v0 + frac * v1, v1 - v0


def resample_rows(values: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    """Shift each row's content by ``shifts[row]`` bins via linear interpolation."""
    return resample_rows_with_slope(values, shifts)[0]


def doppler_correct(
    scan: PolarScan, v: np.ndarray, intrinsics: RadarIntrinsics
) -> PolarScan:
    """Remove the Doppler range shift for a body moving at planar velocity v.

    Row content moves up-range by doppler_gain * (v . u(theta)) bins; with
    zero gain or zero velocity the scan is returned unchanged.
    """
    vel = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(vel)):
        raise ValueError(f"velocity must be finite, got {vel!r}")
    radial = np.cos(scan.azimuth_angles) * vel[0] + np.sin(scan.azimuth_angles) * vel[1]
    shifts = intrinsics.doppler_gain * radial
    if not np.any(shifts):
        return scan
    return PolarScan(
        resample_rows(scan.intensities, shifts),
        scan.azimuth_timestamps,
        scan.azimuth_angles,
        scan.range_resolution,
        scan.min_range,
    )


def undistort_to_cartesian(
    scan: PolarScan,
    yaw_samples,
    v: np.ndarray,
    t_ref: float,
    intensity_floor: float = 0.0,
    anchor: Pose2 | None = None,
) -> CartesianPoints:
    """Convert a scan to Cartesian points in the anchor-time body frame.

    Each azimuth row is placed with the planar pose the sensor reached at
    that row's timestamp, integrated from ``t_ref`` (the previous scan
    time) with the row-constant body velocity ``v`` and the gyro yaw rate.
    Bins with intensity below ``intensity_floor`` are dropped.  When
    ``anchor`` (the world pose of the body at ``t_ref``) is given, points
    are returned in that world frame instead.
    """
    vel = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(vel)):
        raise ValueError(f"velocity must be finite, got {vel!r}")
    theta, b = geometry.planar_motion_table(yaw_samples, t_ref, scan.azimuth_timestamps)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    cos_a, sin_a = np.cos(scan.azimuth_angles), np.sin(scan.azimuth_angles)
    # Beam directions rotated into the t_ref frame, plus per-row offsets.
    dir_x = cos_t * cos_a - sin_t * sin_a
    dir_y = sin_t * cos_a + cos_t * sin_a
    off = b @ vel
    if anchor is not None:
        m = anchor.rotation.matrix()
        dir_x, dir_y = (
            m[0, 0] * dir_x + m[0, 1] * dir_y,
            m[1, 0] * dir_x + m[1, 1] * dir_y,
        )
        off = off @ m.T + anchor.translation
    ranges = scan.ranges()
    px = ranges[None, :] * dir_x[:, None] + off[:, 0][:, None]
    py = ranges[None, :] * dir_y[:, None] + off[:, 1][:, None]
    keep = scan.intensities >= intensity_floor
    coords = np.stack([px[keep], py[keep]], axis=1)
    return CartesianPoints(coords, scan.intensities[keep])
