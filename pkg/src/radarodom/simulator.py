"""Synthetic spinning-radar and gyroscope data with analytic ground truth.

Scenes are planar point-scatterer fields observed by a sensor following a
piecewise constant-speed/constant-yaw-rate trajectory.  Renders model the
two distortions of a mechanically scanned radar: sensor displacement
between azimuths (each row is timestamped and ray-cast from the
instantaneous pose) and Doppler range shifts proportional to the radial
closing speed.  A constant sensing-plane tilt can be simulated; it maps
the yaw rate through the tilt rotation in the gyro model and gives the
ground truth a heading-dependent vertical velocity component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import GyroSample, Trajectory
from .radar import PolarScan, RadarIntrinsics

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Segment:
    """Constant speed and yaw rate for a fixed duration."""

    duration: float
    speed: float
    yaw_rate: float = 0.0

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("segment duration must be positive")


class SimTrajectory:
    """Planar trajectory made of constant-twist segments, starting at the
    origin with zero heading.  Position is continuous across segments."""

    def __init__(self, segments):
        self.segments = list(segments)
        if not self.segments:
            raise ValueError("trajectory needs at least one segment")
        self._starts = []  # (t0, x0, y0, yaw0) per segment
        t, x, y, yaw = 0.0, 0.0, 0.0, 0.0
        for seg in self.segments:
            self._starts.append((t, x, y, yaw))
            x, y, yaw = self._advance(seg, x, y, yaw, seg.duration)
            t += seg.duration
        self.duration = t
        self._start_times = np.array([s[0] for s in self._starts])

    @staticmethod
    def _advance(seg: Segment, x, y, yaw, dt):
        if seg.yaw_rate == 0.0:
            return (
                x + seg.speed * dt * math.cos(yaw),
                y + seg.speed * dt * math.sin(yaw),
                yaw,
            )
        yaw1 = yaw + seg.yaw_rate * dt
        radius = seg.speed / seg.yaw_rate
        return (
            x + radius * (math.sin(yaw1) - math.sin(yaw)),
            y - radius * (math.cos(yaw1) - math.cos(yaw)),
            yaw1,
        )

    def _segment_at(self, t: float):
        k = int(np.searchsorted(self._start_times, t, side="right")) - 1
        k = max(0, min(k, len(self.segments) - 1))
        return self.segments[k], self._starts[k]

    def planar_pose(self, t: float) -> tuple[np.ndarray, float]:
        """(position (2,), heading) at time t (clamped to the domain)."""
        t = min(max(t, 0.0), self.duration)
        seg, (t0, x0, y0, yaw0) = self._segment_at(t)
        x, y, yaw = self._advance(seg, x0, y0, yaw0, t - t0)
        return np.array([x, y]), yaw

    def planar_velocity(self, t: float) -> tuple[np.ndarray, float]:
        """(world velocity (2,), yaw rate) at time t."""
        t = min(max(t, 0.0), self.duration)
        seg, (t0, _, _, yaw0) = self._segment_at(t)
        yaw = yaw0 + seg.yaw_rate * (t - t0)
        return seg.speed * np.array([math.cos(yaw), math.sin(yaw)]), seg.yaw_rate

    def body_velocity(self, t: float) -> np.ndarray:
        """Velocity in the body frame (forward-x) at time t."""
        v, _ = self.planar_velocity(t)
        _, yaw = self.planar_pose(t)
        c, s = math.cos(-yaw), math.sin(-yaw)
        return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])

    @staticmethod
    def straight(speed: float, duration: float) -> "SimTrajectory":
        return SimTrajectory([Segment(duration, speed)])

    @staticmethod
    def arc(speed: float, yaw_rate: float, duration: float) -> "SimTrajectory":
        return SimTrajectory([Segment(duration, speed, yaw_rate)])

    @staticmethod
    def stop(duration: float) -> "SimTrajectory":
        return SimTrajectory([Segment(duration, 0.0)])

    @staticmethod
    def figure_eight(speed: float, duration: float, lead_in: float = 0.0) -> "SimTrajectory":
        """Two opposite full circles traversed in ``duration`` seconds; the
        path closes on the start point by construction."""
        yaw_rate = 2.0 * TWO_PI / duration
        segments = []
        if lead_in > 0:
            segments.append(Segment(lead_in, 0.0))
        segments += [
            Segment(duration / 2.0, speed, yaw_rate),
            Segment(duration / 2.0, speed, -yaw_rate),
        ]
        return SimTrajectory(segments)


@dataclass(frozen=True)
class ScattererWorld:
    """Planar point scatterers with reflectivities, plus the sensor tilt."""

    positions: np.ndarray
    reflectivity: np.ndarray
    tilt: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "reflectivity", np.asarray(self.reflectivity, dtype=float).reshape(-1))
        if self.positions.shape[0] != self.reflectivity.size:
            raise ValueError("positions and reflectivities must pair up")
        if not (np.all(np.isfinite(self.positions)) and np.all(np.isfinite(self.reflectivity))):
            raise ValueError("scatterers must be finite")
        if np.any(self.reflectivity < 0):
            raise ValueError("reflectivity must be non-negative")

    @staticmethod
    def random(
        count: int,
        extent: float,
        rng: np.random.Generator,
        center: np.ndarray | None = None,
        reflectivity_range: tuple[float, float] = (400.0, 2000.0),
        tilt: float = 0.0,
    ) -> "ScattererWorld":
        """Uniformly scattered points in a square of side ``extent``."""
        c = np.zeros(2) if center is None else np.asarray(center, dtype=float)
        positions = c + rng.uniform(-extent / 2.0, extent / 2.0, size=(count, 2))
        reflectivity = rng.uniform(*reflectivity_range, size=count)
        return ScattererWorld(positions, reflectivity, tilt)


def render_scan(
    world: ScattererWorld,
    traj: SimTrajectory,
    t_start: float,
    intrinsics: RadarIntrinsics,
    azimuth_count: int = 400,
    range_bins: int = 1000,
    scan_hz: float = 4.0,
    beam_sigma: float = 2.0,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
) -> PolarScan:
    """One full sweep starting at ``t_start``.

    Azimuth a is ray-cast at its own timestamp from the instantaneous
    sensor pose; each visible scatterer deposits a Gaussian range profile
    (sigma ``beam_sigma`` bins) centered at its true range plus the
    Doppler shift doppler_gain * (radial closing rate).  Gaussian
    intensity noise is added and clamped at zero.
    """
    if scan_hz <= 0:
        raise ValueError(f"scan rate must be positive, got {scan_hz}")
    if azimuth_count < 2 or range_bins < 2:
        raise ValueError("need at least 2 azimuths and 2 range bins")
    period = 1.0 / scan_hz
    times = t_start + period * (np.arange(azimuth_count) + 1) / azimuth_count
    angles = TWO_PI * np.arange(azimuth_count) / azimuth_count
    image = np.zeros((azimuth_count, range_bins))

    if world.positions.shape[0] > 0:
        positions = np.empty((azimuth_count, 2))
        yaws = np.empty(azimuth_count)
        vels = np.empty((azimuth_count, 2))
        for a, t in enumerate(times):
            positions[a], yaws[a] = traj.planar_pose(t)
            vels[a], _ = traj.planar_velocity(t)
        offsets = world.positions[None, :, :] - positions[:, None, :]  # (A, N, 2)
        ranges = np.linalg.norm(offsets, axis=2)
        bearing = np.arctan2(offsets[:, :, 1], offsets[:, :, 0])
        relative = np.mod(bearing - yaws[:, None] - angles[:, None] + math.pi, TWO_PI) - math.pi
        bin_width = TWO_PI / azimuth_count
        # Tent beam pattern over the two adjacent azimuth rows; this keeps
        # the rendered tangential position continuous instead of snapping
        # scatterers to row centers.
        beam_weight = np.maximum(0.0, 1.0 - np.abs(relative) / bin_width)
        # Range rate of a static scatterer: positive when the sensor recedes.
        with np.errstate(invalid="ignore", divide="ignore"):
            radial_rate = -np.einsum("ank,ak->an", offsets, vels) / ranges
        centers = (
            ranges - intrinsics.min_range
        ) / intrinsics.range_resolution + intrinsics.doppler_gain * radial_rate
        rows, cols = np.nonzero((beam_weight > 0) & (ranges > 0))
        if rows.size:
            c = centers[rows, cols]
            amp = world.reflectivity[cols] * beam_weight[rows, cols]
            half_width = int(math.ceil(4.0 * beam_sigma))
            offsets_bins = np.arange(-half_width, half_width + 1)
            bins = np.rint(c)[:, None].astype(np.int64) + offsets_bins[None, :]
            profile = amp[:, None] * np.exp(
                -((bins - c[:, None]) ** 2) / (2.0 * beam_sigma * beam_sigma)
            )
            valid = (bins >= 0) & (bins < range_bins)
            row_idx = np.broadcast_to(rows[:, None], bins.shape)[valid]
            np.add.at(image, (row_idx, bins[valid]), profile[valid])

    if noise_sigma > 0:
        if rng is None:
            raise ValueError("noise_sigma > 0 requires an rng")
        image = np.maximum(image + rng.normal(0.0, noise_sigma, image.shape), 0.0)
    return PolarScan(image, times, angles, intrinsics.range_resolution, intrinsics.min_range)


def sample_gyro(
    traj: SimTrajectory,
    rate_hz: float,
    bias: np.ndarray | None = None,
    noise_sigma: float = 0.0,
    tilt: float = 0.0,
    rng: np.random.Generator | None = None,
    t_end: float | None = None,
) -> list[GyroSample]:
    """Gyro stream over [0, t_end] at a uniform rate, in the radar frame.

    The planar yaw rate is mapped through the tilt rotation (a tilted
    sensor sees part of the turn rate on its x axis), then bias and white
    noise are added.
    """
    if rate_hz <= 0:
        raise ValueError(f"gyro rate must be positive, got {rate_hz}")
    end = traj.duration if t_end is None else t_end
    count = int(round(end * rate_hz)) + 1
    times = np.arange(count) / rate_hz
    b = np.zeros(3) if bias is None else np.asarray(bias, dtype=float)
    sin_a, cos_a = math.sin(tilt), math.cos(tilt)
    samples = []
    noise = None
    if noise_sigma > 0:
        if rng is None:
            raise ValueError("noise_sigma > 0 requires an rng")
        noise = rng.normal(0.0, noise_sigma, size=(count, 3))
    for k, t in enumerate(times):
        _, yaw_rate = traj.planar_velocity(float(t))
        rate = np.array([-sin_a * yaw_rate, 0.0, cos_a * yaw_rate]) + b
        if noise is not None:
            rate = rate + noise[k]
        samples.append(GyroSample(float(t), rate))
    return samples


def generate_dataset(
    out_dir,
    traj: SimTrajectory,
    world: ScattererWorld,
    intrinsics: RadarIntrinsics,
    azimuth_count: int = 200,
    range_bins: int = 500,
    scan_hz: float = 4.0,
    gyro_hz: float = 100.0,
    beam_sigma: float = 2.0,
    noise_sigma: float = 0.0,
    gyro_noise_sigma: float = 0.0,
    gyro_bias: np.ndarray | None = None,
    seed: int = 0,
    sequence: str = "sim",
):
    """Render a full dataset to disk in the standard layout.

    Scans tile [0, duration] back to back at ``scan_hz``; the gyro stream
    and the ground truth (poses at gyro timestamps, body velocity traces)
    cover the same span.  Returns the resolved DatasetLayout.
    """
    from pathlib import Path

    from . import io

    root = Path(out_dir)
    (root / "scans").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    scan_count = int(math.floor(traj.duration * scan_hz + 1e-9))
    if scan_count < 1:
        raise ValueError("trajectory too short for a single scan")
    for k in range(scan_count):
        scan = render_scan(
            world,
            traj,
            k / scan_hz,
            intrinsics,
            azimuth_count,
            range_bins,
            scan_hz,
            beam_sigma,
            noise_sigma,
            rng,
        )
        io.save_scan(scan, root / "scans" / f"scan_{k:06d}.pgm")
    gyro = sample_gyro(
        traj, gyro_hz, gyro_bias, gyro_noise_sigma, world.tilt, rng
    )
    io.save_gyro(gyro, root / "gyro.csv")
    gt = ground_truth(traj, world.tilt, np.array([s.timestamp for s in gyro]))
    io.save_trajectory(gt.trajectory, root / "groundtruth.txt")
    io.save_groundtruth_velocity(
        gt.times, gt.speed_planar, gt.v_body, gt.v_z, root / "groundtruth_vel.csv"
    )
    io.write_manifest(root, sequence, intrinsics, has_groundtruth=True)
    return io.load_dataset(root)


@dataclass(frozen=True)
class GroundTruth:
    """Exact poses and per-axis velocities of the simulated sensor."""

    trajectory: Trajectory
    times: np.ndarray
    speed_planar: np.ndarray  # ||v|| of the in-plane velocity estimate
    v_body: np.ndarray  # (K, 2) planar velocity in the body frame
    v_xy: np.ndarray  # (K, 2) in-plane part of the true 3D body velocity
    v_z: np.ndarray  # (K,) vertical body velocity


def ground_truth(traj: SimTrajectory, tilt: float, timestamps: np.ndarray) -> GroundTruth:
    """Poses and velocity traces at the given timestamps.

    Poses are expressed in a level world frame: rotation yaw followed by
    the constant tilt, translation the planar path scaled by cos(tilt)
    with zero height.  Body-frame velocities satisfy
    ||v_xy|| = cos^2(tilt) * speed and v_z = sin(tilt)cos(tilt) * speed.
    """
    ts = np.asarray(timestamps, dtype=float)
    k = ts.size
    sin_a, cos_a = math.sin(tilt), math.cos(tilt)
    tilt_rot = np.array(
        [[cos_a, 0.0, sin_a], [0.0, 1.0, 0.0], [-sin_a, 0.0, cos_a]]
    )
    rotations = np.empty((k, 3, 3))
    translations = np.zeros((k, 3))
    speed = np.empty(k)
    v_body = np.empty((k, 2))
    for i, t in enumerate(ts):
        pos, yaw = traj.planar_pose(float(t))
        c, s = math.cos(yaw), math.sin(yaw)
        yaw_rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        rotations[i] = yaw_rot @ tilt_rot
        translations[i, :2] = cos_a * pos
        vb = traj.body_velocity(float(t))
        v_body[i] = vb
        speed[i] = math.hypot(vb[0], vb[1])
    return GroundTruth(
        trajectory=Trajectory(ts, rotations, translations),
        times=ts,
        speed_planar=speed,
        v_body=v_body,
        v_xy=cos_a * cos_a * v_body,
        v_z=sin_a * cos_a * speed,
    )
