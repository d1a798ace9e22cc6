"""Relative odometry error metrics and the planar projection.

The error protocol follows the KITTI odometry benchmark: for every ground
truth frame and every segment length (meters of ground-truth arc), the
relative transform over the segment is compared between ground truth and
estimate; translation error is reported as a percentage of the segment
length, rotation error in degrees per 100 m.  The estimate is resampled
at the ground-truth timestamps (linear translation, shortest-arc
rotation), so the metric is invariant to a common rigid transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Rotation3, Trajectory, exp_so3, log_so3

DEFAULT_SEGMENT_LENGTHS = (100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0)


@dataclass(frozen=True)
class LengthErrors:
    length: float
    translation_error: float  # percent of segment length
    rotation_error: float  # degrees per 100 m
    segment_count: int


@dataclass(frozen=True)
class OdometryErrorReport:
    """Averages over all evaluated segments, with a per-length breakdown."""

    translation_error: float
    rotation_error: float
    per_length: tuple[LengthErrors, ...] = field(default_factory=tuple)
    segment_count: int = 0
    diagnostic: str | None = None

    def summary(self) -> str:
        """The 'XX / YY' cell format: percent / deg per 100 m."""
        return f"{self.translation_error:.2f} / {self.rotation_error:.2f}"


def _interpolate(traj: Trajectory, times: np.ndarray) -> Trajectory:
    """Resample poses at the given times (must lie within the trajectory)."""
    idx = np.clip(np.searchsorted(traj.times, times, side="right") - 1, 0, len(traj) - 2)
    t0 = traj.times[idx]
    t1 = traj.times[idx + 1]
    s = np.where(t1 > t0, (times - t0) / np.where(t1 > t0, t1 - t0, 1.0), 0.0)
    translations = (1 - s)[:, None] * traj.translations[idx] + s[:, None] * traj.translations[
        idx + 1
    ]
    rotations = np.empty((times.size, 3, 3))
    for k in range(times.size):
        r0 = traj.rotations[idx[k]]
        if s[k] == 0.0:
            rotations[k] = r0
            continue
        relative = log_so3(Rotation3(r0.T @ traj.rotations[idx[k] + 1]))
        rotations[k] = r0 @ exp_so3(s[k] * relative).matrix
    return Trajectory(times, rotations, translations)


def _segment_error(
    gt: Trajectory, est: Trajectory, i: int, j: int, length: float
) -> tuple[float, float]:
    """(translation %, rotation deg/100m) of one segment, per KITTI."""
    rel_gt_r = gt.rotations[i].T @ gt.rotations[j]
    rel_gt_p = gt.rotations[i].T @ (gt.translations[j] - gt.translations[i])
    rel_est_r = est.rotations[i].T @ est.rotations[j]
    rel_est_p = est.rotations[i].T @ (est.translations[j] - est.translations[i])
    if np.array_equal(rel_est_r, rel_gt_r) and np.array_equal(rel_est_p, rel_gt_p):
        return 0.0, 0.0
    err_r = rel_est_r.T @ rel_gt_r
    err_p = rel_est_r.T @ (rel_gt_p - rel_est_p)
    t_err = math.sqrt(err_p @ err_p) / length
    c = (np.trace(err_r) - 1.0) / 2.0
    angle = math.acos(min(1.0, max(-1.0, c)))
    r_err = math.degrees(angle) / length
    return 100.0 * t_err, 100.0 * r_err


def kitti_error(
    gt: Trajectory, est: Trajectory, lengths=DEFAULT_SEGMENT_LENGTHS
) -> OdometryErrorReport:
    """KITTI relative errors of ``est`` against ``gt``.

    The estimate is interpolated at ground-truth timestamps over the
    overlapping time range.  Returns an empty report with a diagnostic
    when the overlap is too short for the smallest segment length.
    """
    lengths = sorted(float(l) for l in lengths)
    if not lengths:
        raise ValueError("at least one segment length is required")
    if len(gt) < 2 or len(est) < 2:
        return OdometryErrorReport(0.0, 0.0, (), 0, "trajectory has fewer than 2 poses")
    inside = (gt.times >= est.times[0]) & (gt.times <= est.times[-1])
    if int(inside.sum()) < 2:
        return OdometryErrorReport(0.0, 0.0, (), 0, "trajectories do not overlap in time")
    gt_clip = Trajectory(gt.times[inside], gt.rotations[inside], gt.translations[inside])
    est_rs = _interpolate(est, gt_clip.times)
    steps = np.linalg.norm(np.diff(gt_clip.translations, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(steps)])
    if arc[-1] < lengths[0]:
        return OdometryErrorReport(
            0.0,
            0.0,
            (),
            0,
            f"trajectory arc length {arc[-1]:.1f} m is shorter than the "
            f"smallest segment length {lengths[0]:.0f} m",
        )
    per_length: dict[float, list[tuple[float, float]]] = {l: [] for l in lengths}
    all_errors: list[tuple[float, float]] = []
    n = len(gt_clip)
    for i in range(n):
        for length in lengths:
            j = int(np.searchsorted(arc, arc[i] + length, side="left"))
            if j >= n:
                break
            err = _segment_error(gt_clip, est_rs, i, j, length)
            per_length[length].append(err)
            all_errors.append(err)
    if not all_errors:
        return OdometryErrorReport(0.0, 0.0, (), 0, "no segments of the requested lengths")
    breakdown = tuple(
        LengthErrors(
            length,
            float(np.mean([e[0] for e in errs])),
            float(np.mean([e[1] for e in errs])),
            len(errs),
        )
        for length, errs in per_length.items()
        if errs
    )
    return OdometryErrorReport(
        float(np.mean([e[0] for e in all_errors])),
        float(np.mean([e[1] for e in all_errors])),
        breakdown,
        len(all_errors),
    )


def project_se2(traj: Trajectory) -> Trajectory:
    """Planar projection: drop z, keep only the yaw of each rotation.

    Yaw is taken from the ZYX (yaw-pitch-roll) decomposition.  Raises on
    gimbal-degenerate poses (pitch within 1e-6 of +-pi/2), naming the
    timestamp.
    """
    rotations = np.empty_like(traj.rotations)
    translations = traj.translations.copy()
    translations[:, 2] = 0.0
    for k in range(len(traj)):
        m = traj.rotations[k]
        pitch = math.asin(min(1.0, max(-1.0, -m[2, 0])))
        if abs(abs(pitch) - math.pi / 2) < 1e-6:
            raise ValueError(
                f"pose at t={traj.times[k]} is gimbal-degenerate (|pitch| ~ pi/2); "
                "yaw is undefined"
            )
        yaw = math.atan2(m[1, 0], m[0, 0])
        c, s = math.cos(yaw), math.sin(yaw)
        rotations[k] = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return Trajectory(traj.times.copy(), rotations, translations)
