"""Pipeline configuration: a flat key = value text file.

Lines are ``key = value``; blank lines and ``#`` comments are ignored.
Unknown keys are rejected so typos fail loudly.  Radar intrinsics
normally come from the dataset manifest; ``doppler_gain`` set here
overrides the manifest value.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .registration import OptimizerSettings


@dataclass
class PipelineConfig:
    # Local map
    map_extent: float = 200.0
    map_cell: float = 0.5
    map_decay: float = 0.9
    # Registration / optimizer
    intensity_floor: float = 0.0
    v_max: float = 50.0
    min_points: int = 100
    max_iterations: int = 50
    gradient_tolerance: float = 1e-3
    step_tolerance: float = 1e-4
    initial_step: float = 0.5
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    pyramid_levels: int = 2
    coarse_factor: int = 4
    coarse_stride: int = 2
    doppler_lambda: float = 0.0
    doppler_window: int = 64
    doppler_ncc_floor: float = 0.5
    doppler_huber_width: float = 0.5
    # Vertical-velocity lift
    kappa: float = 0.0
    kappa_speed_threshold: float = 3.0
    # Gyro bias / stationarity detection
    stationary_speed: float = 0.1
    stationary_ncc: float = 0.995
    stationary_min_duration: float = 1.0
    # Cold start and seeding
    initial_vx: float = 0.0
    initial_vy: float = 0.0
    rotate_velocity_seed: bool = False
    # Optional intrinsics override
    doppler_gain: float | None = None

    def optimizer_settings(self) -> OptimizerSettings:
        return OptimizerSettings(
            max_iterations=self.max_iterations,
            gradient_tolerance=self.gradient_tolerance,
            step_tolerance=self.step_tolerance,
            initial_step=self.initial_step,
            armijo_c=self.armijo_c,
            backtrack_factor=self.backtrack_factor,
            pyramid_levels=self.pyramid_levels,
            coarse_factor=self.coarse_factor,
            coarse_stride=self.coarse_stride,
            v_max=self.v_max,
            min_points=self.min_points,
            intensity_floor=self.intensity_floor,
            doppler_lambda=self.doppler_lambda,
            doppler_window=self.doppler_window,
            doppler_ncc_floor=self.doppler_ncc_floor,
            doppler_huber_width=self.doppler_huber_width,
        )


def _parse_value(raw: str, target_type, key: str):
    raw = raw.strip()
    if target_type is bool or isinstance(target_type, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"cannot parse boolean for '{key}': {raw!r}")
    if raw.lower() == "none":
        return None
    return target_type(raw)


def load_config(path: str | Path) -> PipelineConfig:
    """Parse a key = value configuration file into a PipelineConfig."""
    fields = {f.name: f for f in dataclasses.fields(PipelineConfig)}
    config = PipelineConfig()
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in fields:
            raise ValueError(f"{path}:{lineno}: unknown configuration key '{key}'")
        current = getattr(config, key)
        if key == "doppler_gain":
            value = None if raw.lower() == "none" else float(raw)
        elif isinstance(current, bool):
            value = _parse_value(raw, bool, key)
        elif isinstance(current, int):
            value = int(raw)
        else:
            value = float(raw)
        setattr(config, key, value)
    return config


def save_config(config: PipelineConfig, path: str | Path) -> None:
    """Write every field as key = value (a loadable round trip)."""
    lines = []
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if value is None:
            value = "none"
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    Path(path).write_text("\n".join(lines) + "\n")
