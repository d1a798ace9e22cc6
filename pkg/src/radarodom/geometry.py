"""Planar and spatial rigid-motion primitives.

Rotations are stored as matrices (SO(3)) or a single angle (SO(2)).
Gyro-rate integration uses trapezoidal quadrature with linear rate
interpolation at interval endpoints; translation quadrature rotates the
body velocity by the midpoint rotation of each gyro subinterval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingDataError

# Below this rotation angle the Rodrigues coefficients are replaced by
# their leading Taylor terms to avoid cancellation.
SMALL_ANGLE = 1e-8

# Matrix rotations are re-orthonormalized (polar projection) after this
# many chained compositions to bound round-off drift.
REORTHONORMALIZE_EVERY = 1000


def _check_finite(name: str, value: np.ndarray | float) -> None:
    if not np.all(np.isfinite(value)):
        raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class Rotation2:
    """Planar rotation, parameterized by its angle in radians."""

    angle: float

    @staticmethod
    def identity() -> "Rotation2":
        return Rotation2(0.0)

    def matrix(self) -> np.ndarray:
        c = math.cos(self.angle)
        s = math.sin(self.angle)
        return np.array([[c, -s], [s, c]])

    def compose(self, other: "Rotation2") -> "Rotation2":
        return Rotation2(self.angle + other.angle)

    def inverse(self) -> "Rotation2":
        return Rotation2(-self.angle)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Rotate one (2,) point or a stack (..., 2) of points."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.matrix().T


@dataclass(frozen=True)
class Rotation3:
    """Spatial rotation as a 3x3 orthonormal matrix.

    ``compositions`` counts chained products since the matrix was last
    projected back onto SO(3); composition triggers re-orthonormalization
    once the count reaches REORTHONORMALIZE_EVERY.
    """

    matrix: np.ndarray
    compositions: int = 0

    @staticmethod
    def identity() -> "Rotation3":
        return Rotation3(np.eye(3))

    @staticmethod
    def from_matrix(matrix: np.ndarray, tol: float = 1e-6) -> "Rotation3":
        """Validate and wrap an externally supplied rotation matrix."""
        m = np.asarray(matrix, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"rotation matrix must be 3x3, got {m.shape}")
        _check_finite("rotation matrix", m)
        if abs(np.linalg.det(m) - 1.0) > tol or np.abs(m @ m.T - np.eye(3)).max() > tol:
            raise ValueError("matrix is not orthonormal with determinant +1")
        return Rotation3(m)

    def compose(self, other: "Rotation3") -> "Rotation3":
        count = self.compositions + other.compositions + 1
        m = self.matrix @ other.matrix
        if count >= REORTHONORMALIZE_EVERY:
            m = orthonormalize(m)
            count = 0
        return Rotation3(m, count)

    def inverse(self) -> "Rotation3":
        return Rotation3(self.matrix.T.copy(), self.compositions)

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ self.matrix.T

    def angle(self) -> float:
        """Rotation angle in radians, in [0, pi]."""
        c = (np.trace(self.matrix) - 1.0) / 2.0
        return math.acos(min(1.0, max(-1.0, c)))


def orthonormalize(matrix: np.ndarray) -> np.ndarray:
    """Project a near-rotation onto SO(3) (polar decomposition via SVD)."""
    u, _, vt = np.linalg.svd(matrix)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


@dataclass(frozen=True)
class Pose2:
    """Planar rigid transform: x_out = R x + t."""

    rotation: Rotation2
    translation: np.ndarray

    @staticmethod
    def identity() -> "Pose2":
        return Pose2(Rotation2.identity(), np.zeros(2))

    def compose(self, other: "Pose2") -> "Pose2":
        return Pose2(
            self.rotation.compose(other.rotation),
            self.rotation.apply(other.translation) + self.translation,
        )

    def inverse(self) -> "Pose2":
        rinv = self.rotation.inverse()
        return Pose2(rinv, -rinv.apply(self.translation))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.rotation.apply(points) + self.translation


@dataclass(frozen=True)
class Pose3:
    """Spatial rigid transform: x_out = R x + t."""

    rotation: Rotation3
    translation: np.ndarray

    @staticmethod
    def identity() -> "Pose3":
        return Pose3(Rotation3.identity(), np.zeros(3))

    def compose(self, other: "Pose3") -> "Pose3":
        return Pose3(
            self.rotation.compose(other.rotation),
            self.rotation.apply(other.translation) + self.translation,
        )

    def inverse(self) -> "Pose3":
        rinv = self.rotation.inverse()
        return Pose3(rinv, -rinv.apply(self.translation))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.rotation.apply(points) + self.translation

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 form, last row [0 0 0 1]."""
        m = np.eye(4)
        m[:3, :3] = self.rotation.matrix
        m[:3, 3] = self.translation
        return m


@dataclass(frozen=True)
class GyroSample:
    """Timestamped 3-axis angular rate, expressed in the radar frame."""

    timestamp: float
    rate: np.ndarray  # (3,) rad/s

    @property
    def yaw_rate(self) -> float:
        return float(self.rate[2])


def gyro_arrays(samples) -> tuple[np.ndarray, np.ndarray]:
    """Convert a GyroSample sequence to (timestamps (M,), rates (M, 3))."""
    times = np.array([s.timestamp for s in samples], dtype=float)
    rates = np.array([s.rate for s in samples], dtype=float).reshape(-1, 3)
    if times.size >= 2 and np.any(np.diff(times) <= 0):
        bad = int(np.argmax(np.diff(times) <= 0)) + 1
        raise ValueError(f"gyro timestamps not strictly increasing at index {bad}")
    return times, rates


def exp_so2(theta: float) -> Rotation2:
    """Exponential map so(2) -> SO(2)."""
    theta = float(theta)
    _check_finite("theta", theta)
    return Rotation2(theta)


def exp_so3(omega: np.ndarray) -> Rotation3:
    """Exponential map so(3) -> SO(3) (Rodrigues' formula).

    Angles below SMALL_ANGLE use the two-term series of the Rodrigues
    coefficients to avoid cancellation.
    """
    w = np.asarray(omega, dtype=float)
    if w.shape != (3,):
        raise ValueError(f"omega must be a 3-vector, got shape {w.shape}")
    _check_finite("omega", w)
    wx, wy, wz = float(w[0]), float(w[1]), float(w[2])
    theta2 = wx * wx + wy * wy + wz * wz
    theta = math.sqrt(theta2)
    if theta < SMALL_ANGLE:
        a, b = 1.0, 0.5
    else:
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / theta2
    # I + a*W + b*W^2 with W = hat(w), written out component-wise.
    xx, yy, zz = wx * wx, wy * wy, wz * wz
    xy, xz, yz = wx * wy, wx * wz, wy * wz
    m = np.array(
        [
            [1.0 - b * (yy + zz), b * xy - a * wz, b * xz + a * wy],
            [b * xy + a * wz, 1.0 - b * (xx + zz), b * yz - a * wx],
            [b * xz - a * wy, b * yz + a * wx, 1.0 - b * (xx + yy)],
        ]
    )
    return Rotation3(m)


def log_so3(rotation: Rotation3) -> np.ndarray:
    """Inverse of exp_so3; returns the axis-angle vector in [0, pi]."""
    m = rotation.matrix
    c = (np.trace(m) - 1.0) / 2.0
    theta = math.acos(min(1.0, max(-1.0, c)))
    v = 0.5 * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
    if theta < SMALL_ANGLE:
        return v
    if math.pi - theta < 1e-6:
        # Near pi the skew part vanishes; recover the axis from the
        # symmetric part instead.
        d = np.diagonal(m)
        k = int(np.argmax(d))
        axis = np.zeros(3)
        axis[k] = math.sqrt(max(0.0, (d[k] + 1.0) / 2.0))
        for j in range(3):
            if j != k:
                axis[j] = (m[k, j] + m[j, k]) / (4.0 * axis[k])
        if v @ axis < 0:
            axis = -axis
        return theta * axis / np.linalg.norm(axis)
    return theta / math.sin(theta) * v


def _bracket_check(times: np.ndarray, t0: float, t1: float) -> None:
    if times.size == 0:
        raise MissingDataError(f"no gyro samples; need coverage of [{t0}, {t1}]")
    if times[0] > t0 or times[-1] < t1:
        raise MissingDataError(
            f"gyro stream covers [{times[0]}, {times[-1]}] "
            f"but [{t0}, {t1}] was requested"
        )


def _rate_at(times: np.ndarray, rates: np.ndarray, t: float) -> float:
    return float(np.interp(t, times, rates))


def planar_motion_table(
    yaw_samples, t_ref: float, query_times: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Integrated yaw and translation Jacobian at the query times.

    Returns ``(theta, B)`` where ``theta[k]`` is the trapezoidal integral
    of the yaw rate over [t_ref, query_times[k]] and ``B[k]`` is the 2x2
    matrix such that the planar translation of a body moving at constant
    velocity v equals ``B[k] @ v`` (midpoint-rotation quadrature per gyro
    subinterval).  Query times must be ascending and >= t_ref.
    """
    times, rates3 = gyro_arrays(yaw_samples)
    rates = rates3[:, 2]
    queries = np.asarray(query_times, dtype=float)
    if queries.size == 0:
        return np.zeros(0), np.zeros((0, 2, 2))
    if np.any(np.diff(queries) < 0):
        raise ValueError("query times must be ascending")
    if queries[0] < t_ref:
        raise ValueError("query times must not precede the anchor time")
    _bracket_check(times, t_ref, float(queries[-1]))

    theta_out = np.zeros(queries.size)
    b_out = np.zeros((queries.size, 2, 2))
    theta = 0.0
    b00 = b01 = b10 = b11 = 0.0
    cursor = t_ref
    rate_cursor = _rate_at(times, rates, cursor)
    for k, q in enumerate(queries):
        if q > cursor:
            # Gyro knots strictly inside (cursor, q), then q itself.
            lo = int(np.searchsorted(times, cursor, side="right"))
            hi = int(np.searchsorted(times, q, side="left"))
            knots = times[lo:hi].tolist() + [float(q)]
            for t_next in knots:
                rate_next = _rate_at(times, rates, t_next)
                dt = t_next - cursor
                rate_mid = 0.5 * (rate_cursor + rate_next)
                theta_mid = theta + 0.5 * (rate_cursor + rate_mid) * (0.5 * dt)
                c, s = math.cos(theta_mid), math.sin(theta_mid)
                b00 += dt * c
                b01 -= dt * s
                b10 += dt * s
                b11 += dt * c
                theta += 0.5 * (rate_cursor + rate_next) * dt
                cursor = t_next
                rate_cursor = rate_next
        theta_out[k] = theta
        b_out[k, 0, 0] = b00
        b_out[k, 0, 1] = b01
        b_out[k, 1, 0] = b10
        b_out[k, 1, 1] = b11
    return theta_out, b_out


def integrate_yaw(yaw_samples, t0: float, t1: float) -> float:
    """Trapezoidal integral of the yaw rate over [t0, t1].

    Rates at the interval endpoints are linearly interpolated; the sample
    stream must bracket the interval.
    """
    if t1 < t0:
        raise ValueError(f"t1 ({t1}) must not precede t0 ({t0})")
    if t1 == t0:
        times, _ = gyro_arrays(yaw_samples)
        _bracket_check(times, t0, t1)
        return 0.0
    theta, _ = planar_motion_table(yaw_samples, t0, np.array([t1]))
    return float(theta[0])


def se2_pose_at(
    v_planar: np.ndarray, yaw_samples, t_prev: float, t: float
) -> Pose2:
    """Planar pose at time t relative to the body frame at t_prev.

    Rotation integrates the gyro yaw rate; translation accumulates the
    constant body velocity rotated by the midpoint rotation of each gyro
    subinterval.
    """
    v = np.asarray(v_planar, dtype=float)
    _check_finite("v_planar", v)
    if t < t_prev:
        raise ValueError(f"t ({t}) must not precede t_prev ({t_prev})")
    if t == t_prev:
        times, _ = gyro_arrays(yaw_samples)
        _bracket_check(times, t_prev, t)
        return Pose2.identity()
    theta, b = planar_motion_table(yaw_samples, t_prev, np.array([t]))
    return Pose2(Rotation2(float(theta[0])), b[0] @ v)


def integrate_pose3(
    prev: Pose3,
    omega_prev: np.ndarray,
    omega_cur: np.ndarray,
    v3: np.ndarray,
    dt: float,
) -> Pose3:
    """One gyro-step pose update.

    The rotation increment is exp of the arithmetic mean of the two rate
    samples times dt; the translation increment is the body-frame velocity
    times dt, composed on the right.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    w = 0.5 * (np.asarray(omega_prev, dtype=float) + np.asarray(omega_cur, dtype=float))
    inc = Pose3(exp_so3(w * dt), np.asarray(v3, dtype=float) * dt)
    return prev.compose(inc)


class Trajectory:
    """Time-ordered world-frame poses, stored as parallel arrays."""

    def __init__(self, times: np.ndarray, rotations: np.ndarray, translations: np.ndarray):
        self.times = np.asarray(times, dtype=float)
        self.rotations = np.asarray(rotations, dtype=float).reshape(-1, 3, 3)
        self.translations = np.asarray(translations, dtype=float).reshape(-1, 3)
        n = self.times.size
        if self.rotations.shape[0] != n or self.translations.shape[0] != n:
            raise ValueError("trajectory arrays must have equal length")
        if n >= 2 and np.any(np.diff(self.times) <= 0):
            bad = int(np.argmax(np.diff(self.times) <= 0)) + 1
            raise ValueError(f"trajectory timestamps not strictly increasing at index {bad}")

    @classmethod
    def from_poses(cls, stamped_poses) -> "Trajectory":
        """Build from an iterable of (timestamp, Pose3)."""
        items = list(stamped_poses)
        times = np.array([t for t, _ in items], dtype=float)
        rots = np.array([p.rotation.matrix for _, p in items], dtype=float).reshape(-1, 3, 3)
        trans = np.array([p.translation for _, p in items], dtype=float).reshape(-1, 3)
        return cls(times, rots, trans)

    def pose(self, index: int) -> Pose3:
        return Pose3(Rotation3(self.rotations[index]), self.translations[index])

    def __len__(self) -> int:
        return int(self.times.size)

    def __iter__(self):
        for k in range(len(self)):
            yield float(self.times[k]), self.pose(k)
