"""On-disk dataset formats and loaders.

A dataset directory contains::

    manifest.txt        key = value: sequence id, file references, intrinsics
    scans/scan_NNNNNN.pgm   16-bit grayscale image, rows = azimuths
    scans/scan_NNNNNN.txt   sidecar: range grid, timestamps, angles, scale
    gyro.csv            timestamp_s, wx, wy, wz (rad/s, radar frame)
    groundtruth.txt     optional: timestamp + translation + row-major 3x3
    groundtruth_vel.csv optional: timestamp_s, speed, vx, vy, vz (body frame)

Timestamps are integer microseconds on disk (written as fixed-point
seconds) so realistic epochs round-trip exactly; azimuth angles are
fixed-point at 1e-6 rad.  Scan intensities are quantized by the sidecar's
``intensity_scale`` (counts per intensity unit); loading yields exact
multiples of 1/scale, so a load/save cycle is byte-stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetFormatError
from .geometry import GyroSample, Rotation3, Trajectory
from .lift import KappaCalibration
from .localmap import LocalMap
from .radar import PolarScan, RadarIntrinsics

_TS_SCALE = 1_000_000  # microseconds
_ANGLE_SCALE = 1_000_000  # micro-radians


def _write_pgm16(path: Path, image: np.ndarray) -> None:
    data = np.ascontiguousarray(image.astype(">u2"))
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n65535\n".encode("ascii")
    path.write_bytes(header + data.tobytes())


def _read_pgm16(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DatasetFormatError(f"{path}: truncated PGM header")
        fields.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    if fields[0] != b"P5":
        raise DatasetFormatError(f"{path}: not a binary PGM (P5) file")
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 65535:
        raise DatasetFormatError(f"{path}: expected 16-bit PGM (maxval 65535), got {maxval}")
    expected = width * height * 2
    body = raw[pos : pos + expected]
    if len(body) != expected:
        raise DatasetFormatError(
            f"{path}: expected {expected} bytes of pixel data, got {len(body)}"
        )
    return np.frombuffer(body, dtype=">u2").reshape(height, width).astype(np.float64)


def _scan_paths(path: str | Path) -> tuple[Path, Path]:
    p = Path(path)
    stem = p.with_suffix("")
    return stem.with_suffix(".pgm"), stem.with_suffix(".txt")


def save_scan(scan: PolarScan, path: str | Path, intensity_scale: float = 1.0) -> None:
    """Write one sweep as a 16-bit PGM plus its text sidecar.

    Intensities are stored as round(value * intensity_scale), clipped to
    the 16-bit range.
    """
    image_path, sidecar_path = _scan_paths(path)
    counts = np.clip(np.rint(scan.intensities * intensity_scale), 0, 65535)
    _write_pgm16(image_path, counts)
    ts = np.rint(scan.azimuth_timestamps * _TS_SCALE).astype(np.int64)
    angles = np.rint(scan.azimuth_angles * _ANGLE_SCALE).astype(np.int64)
    lines = [
        f"range_resolution = {scan.range_resolution!r}",
        f"min_range = {scan.min_range!r}",
        f"intensity_scale = {intensity_scale!r}",
        f"azimuth_count = {scan.azimuth_count}",
        "timestamps_us = " + ",".join(str(v) for v in ts),
        "angles_urad = " + ",".join(str(v) for v in angles),
    ]
    sidecar_path.write_text("\n".join(lines) + "\n")


def _parse_sidecar(path: Path) -> dict:
    entries = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise DatasetFormatError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in stripped.split("=", 1))
        entries[key] = value
    return entries


def load_scan(path: str | Path) -> PolarScan:
    """Load one sweep from its image/sidecar pair (either path works)."""
    image_path, sidecar_path = _scan_paths(path)
    if not image_path.exists():
        raise DatasetFormatError(f"{image_path}: scan image not found")
    if not sidecar_path.exists():
        raise DatasetFormatError(f"{sidecar_path}: scan sidecar not found")
    image = _read_pgm16(image_path)
    entries = _parse_sidecar(sidecar_path)
    for required in (
        "range_resolution",
        "min_range",
        "intensity_scale",
        "azimuth_count",
        "timestamps_us",
        "angles_urad",
    ):
        if required not in entries:
            raise DatasetFormatError(f"{sidecar_path}: missing field '{required}'")
    try:
        azimuth_count = int(entries["azimuth_count"])
        scale = float(entries["intensity_scale"])
        timestamps = np.array([int(v) for v in entries["timestamps_us"].split(",")], dtype=np.int64)
        angles = np.array([int(v) for v in entries["angles_urad"].split(",")], dtype=np.int64)
    except ValueError as exc:
        raise DatasetFormatError(f"{sidecar_path}: {exc}") from exc
    if image.shape[0] != azimuth_count:
        raise DatasetFormatError(
            f"{sidecar_path}: azimuth_count {azimuth_count} does not match "
            f"image rows {image.shape[0]}"
        )
    if timestamps.size != azimuth_count or angles.size != azimuth_count:
        raise DatasetFormatError(
            f"{sidecar_path}: timestamp/angle list length does not match "
            f"azimuth_count {azimuth_count}"
        )
    if np.any(np.diff(timestamps) <= 0):
        row = int(np.argmax(np.diff(timestamps) <= 0)) + 1
        raise DatasetFormatError(
            f"{sidecar_path}: non-monotonic azimuth timestamp at row {row}"
        )
    if scale <= 0:
        raise DatasetFormatError(f"{sidecar_path}: intensity_scale must be positive")
    return PolarScan(
        image / scale,
        timestamps / _TS_SCALE,
        angles / _ANGLE_SCALE,
        float(entries["range_resolution"]),
        float(entries["min_range"]),
    )


def save_gyro(samples, path: str | Path) -> None:
    lines = ["timestamp_s,wx,wy,wz"]
    for s in samples:
        t_us = round(s.timestamp * _TS_SCALE)
        lines.append(
            f"{t_us / _TS_SCALE:.6f},{s.rate[0]!r},{s.rate[1]!r},{s.rate[2]!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def load_gyro(path: str | Path) -> list[GyroSample]:
    """Parse a gyro CSV (header row, then timestamp_s, wx, wy, wz)."""
    p = Path(path)
    if not p.exists():
        raise DatasetFormatError(f"{p}: gyro file not found")
    lines = p.read_text().splitlines()
    if not lines or lines[0].strip().lower().replace(" ", "") != "timestamp_s,wx,wy,wz":
        raise DatasetFormatError(f"{p}:1: expected header 'timestamp_s,wx,wy,wz'")
    samples: list[GyroSample] = []
    previous = -math.inf
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise DatasetFormatError(f"{p}:{lineno}: expected 4 comma-separated values")
        try:
            t = float(parts[0])
            rate = np.array([float(parts[1]), float(parts[2]), float(parts[3])])
        except ValueError as exc:
            raise DatasetFormatError(f"{p}:{lineno}: non-numeric value ({exc})") from exc
        if t <= previous:
            raise DatasetFormatError(f"{p}:{lineno}: timestamps not strictly increasing")
        previous = t
        samples.append(GyroSample(t, rate))
    return samples


def save_trajectory(traj: Trajectory, path: str | Path) -> None:
    """Text trajectory: timestamp, translation xyz, row-major 3x3 rotation."""
    lines = ["# timestamp_s tx ty tz r00 r01 r02 r10 r11 r12 r20 r21 r22"]
    for k in range(len(traj)):
        t_us = round(traj.times[k] * _TS_SCALE)
        values = [f"{t_us / _TS_SCALE:.6f}"]
        values += [repr(float(v)) for v in traj.translations[k]]
        values += [repr(float(v)) for v in traj.rotations[k].ravel()]
        lines.append(" ".join(values))
    Path(path).write_text("\n".join(lines) + "\n")


def load_trajectory(path: str | Path, orthonormal_tol: float = 1e-8) -> Trajectory:
    p = Path(path)
    if not p.exists():
        raise DatasetFormatError(f"{p}: trajectory file not found")
    times, rotations, translations = [], [], []
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 13:
            raise DatasetFormatError(f"{p}:{lineno}: expected 13 values, got {len(parts)}")
        try:
            values = [float(v) for v in parts]
        except ValueError as exc:
            raise DatasetFormatError(f"{p}:{lineno}: non-numeric value ({exc})") from exc
        times.append(values[0])
        translations.append(values[1:4])
        rotation = np.array(values[4:]).reshape(3, 3)
        if np.abs(rotation @ rotation.T - np.eye(3)).max() > orthonormal_tol:
            raise DatasetFormatError(f"{p}:{lineno}: rotation is not orthonormal")
        rotations.append(rotation)
    try:
        return Trajectory(np.array(times), np.array(rotations).reshape(-1, 3, 3),
                          np.array(translations).reshape(-1, 3))
    except ValueError as exc:
        raise DatasetFormatError(f"{p}: {exc}") from exc


def save_velocity_trace(estimates, path: str | Path) -> None:
    """Per-scan body velocities as CSV (timestamp_s, v_x, v_y, v_z, ...)."""
    lines = ["timestamp_s,v_x,v_y,v_z,score,converged,coasted"]
    for e in estimates:
        t_us = round(e.timestamp * _TS_SCALE)
        lines.append(
            f"{t_us / _TS_SCALE:.6f},{e.velocity3[0]!r},{e.velocity3[1]!r},"
            f"{e.velocity3[2]!r},{e.score!r},{int(e.converged)},{int(e.coasted)}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def save_groundtruth_velocity(times, speed, v_body, v_z, path: str | Path) -> None:
    """Ground-truth body velocities as CSV (timestamp_s, speed, vx, vy, vz)."""
    lines = ["timestamp_s,speed,vx,vy,vz"]
    for k in range(len(times)):
        t_us = round(float(times[k]) * _TS_SCALE)
        lines.append(
            f"{t_us / _TS_SCALE:.6f},{float(speed[k])!r},{float(v_body[k][0])!r},"
            f"{float(v_body[k][1])!r},{float(v_z[k])!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def load_groundtruth_velocity(path: str | Path):
    """Returns (times, speed, v_body (K,2), v_z) arrays."""
    p = Path(path)
    if not p.exists():
        raise DatasetFormatError(f"{p}: ground-truth velocity file not found")
    lines = p.read_text().splitlines()
    if not lines or lines[0].strip().lower().replace(" ", "") != "timestamp_s,speed,vx,vy,vz":
        raise DatasetFormatError(f"{p}:1: expected header 'timestamp_s,speed,vx,vy,vz'")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise DatasetFormatError(f"{p}:{lineno}: expected 5 comma-separated values")
        try:
            rows.append([float(v) for v in parts])
        except ValueError as exc:
            raise DatasetFormatError(f"{p}:{lineno}: non-numeric value ({exc})") from exc
    data = np.array(rows).reshape(-1, 5)
    return data[:, 0], data[:, 1], data[:, 2:4], data[:, 4]


def save_kappa(cal: KappaCalibration, path: str | Path, sequence: str = "") -> None:
    lines = [
        f"kappa = {cal.kappa!r}",
        f"sample_count = {cal.sample_count}",
        f"speed_threshold = {cal.speed_threshold!r}",
        f"sequence = {sequence}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def load_kappa(path: str | Path) -> KappaCalibration:
    p = Path(path)
    if not p.exists():
        raise DatasetFormatError(f"{p}: kappa file not found")
    entries = _parse_sidecar(p)
    for required in ("kappa", "sample_count", "speed_threshold"):
        if required not in entries:
            raise DatasetFormatError(f"{p}: missing field '{required}'")
    return KappaCalibration(
        float(entries["kappa"]),
        int(entries["sample_count"]),
        float(entries["speed_threshold"]),
    )


@dataclass(frozen=True)
class DatasetLayout:
    """Resolved dataset: scan file list (time-ordered), streams, intrinsics."""

    root: Path
    scan_paths: list[Path]
    gyro_path: Path
    intrinsics: RadarIntrinsics
    sequence: str
    groundtruth_path: Path | None = None
    groundtruth_velocity_path: Path | None = None

    def load_scans(self) -> list[PolarScan]:
        return [load_scan(p) for p in self.scan_paths]

    def load_gyro(self) -> list[GyroSample]:
        return load_gyro(self.gyro_path)


def write_manifest(layout_dir: str | Path, sequence: str, intrinsics: RadarIntrinsics,
                   has_groundtruth: bool) -> None:
    root = Path(layout_dir)
    lines = [
        f"sequence = {sequence}",
        "scan_dir = scans",
        "gyro = gyro.csv",
        f"doppler_gain = {intrinsics.doppler_gain!r}",
        f"range_resolution = {intrinsics.range_resolution!r}",
        f"min_range = {intrinsics.min_range!r}",
    ]
    if has_groundtruth:
        lines.append("groundtruth = groundtruth.txt")
        lines.append("groundtruth_velocity = groundtruth_vel.csv")
    (root / "manifest.txt").write_text("\n".join(lines) + "\n")


def load_dataset(root: str | Path) -> DatasetLayout:
    """Resolve a dataset directory through its manifest."""
    root = Path(root)
    manifest = root / "manifest.txt"
    if not manifest.exists():
        raise DatasetFormatError(f"{manifest}: manifest not found")
    entries = _parse_sidecar(manifest)
    for required in ("scan_dir", "gyro", "doppler_gain", "range_resolution", "min_range"):
        if required not in entries:
            raise DatasetFormatError(f"{manifest}: missing field '{required}'")
    scan_dir = root / entries["scan_dir"]
    if not scan_dir.is_dir():
        raise DatasetFormatError(f"{scan_dir}: scan directory not found")
    scan_paths = sorted(scan_dir.glob("*.pgm"))
    gyro_path = root / entries["gyro"]
    if not gyro_path.exists():
        raise DatasetFormatError(f"{gyro_path}: gyro file not found")
    gt_path = root / entries["groundtruth"] if "groundtruth" in entries else None
    gt_vel = root / entries["groundtruth_velocity"] if "groundtruth_velocity" in entries else None
    if gt_path is not None and not gt_path.exists():
        raise DatasetFormatError(f"{gt_path}: ground truth referenced but missing")
    if gt_vel is not None and not gt_vel.exists():
        raise DatasetFormatError(f"{gt_vel}: ground-truth velocities referenced but missing")
    intrinsics = RadarIntrinsics(
        float(entries["doppler_gain"]),
        float(entries["range_resolution"]),
        float(entries["min_range"]),
    )
    return DatasetLayout(
        root=root,
        scan_paths=scan_paths,
        gyro_path=gyro_path,
        intrinsics=intrinsics,
        sequence=entries.get("sequence", root.name),
        groundtruth_path=gt_path,
        groundtruth_velocity_path=gt_vel,
    )


def save_map_debug(grid: LocalMap, path_base: str | Path) -> None:
    """Inspection dump: 16-bit image of the map values plus a text sidecar."""
    base = Path(path_base)
    peak = float(grid.values.max())
    scale = 60000.0 / peak if peak > 0 else 1.0
    _write_pgm16(base.with_suffix(".pgm"), np.clip(grid.values * scale, 0, 65535))
    lines = [
        f"origin_x = {grid.origin[0]!r}",
        f"origin_y = {grid.origin[1]!r}",
        f"cell_size = {grid.cell_size!r}",
        f"decay = {grid.decay!r}",
        f"value_scale = {scale!r}",
    ]
    base.with_suffix(".txt").write_text("\n".join(lines) + "\n")
