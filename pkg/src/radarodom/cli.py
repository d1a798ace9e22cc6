"""Command-line surface: simulate, odom, calibrate, evaluate."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import evaluation, io, lift, pipeline, simulator
from .config import PipelineConfig, load_config
from .errors import CalibrationError, DatasetFormatError, MissingDataError
from .lift import KappaCalibration
from .radar import RadarIntrinsics


def _load_pipeline_config(args) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    return config


def _resolve_intrinsics(dataset, config: PipelineConfig) -> RadarIntrinsics:
    intrinsics = dataset.intrinsics
    if config.doppler_gain is not None:
        intrinsics = RadarIntrinsics(
            config.doppler_gain, intrinsics.range_resolution, intrinsics.min_range
        )
    return intrinsics


def _cmd_odom(args) -> int:
    config = _load_pipeline_config(args)
    dataset = io.load_dataset(args.dataset)
    intrinsics = _resolve_intrinsics(dataset, config)
    if args.kappa_file:
        cal = io.load_kappa(args.kappa_file)
    elif config.kappa != 0.0:
        cal = KappaCalibration(config.kappa, 1, config.kappa_speed_threshold)
    else:
        cal = KappaCalibration.disabled()
    scans = dataset.load_scans()
    gyro = dataset.load_gyro()
    result = pipeline.run(scans, gyro, cal, intrinsics, config)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    io.save_trajectory(result.trajectory, out / "trajectory.txt")
    io.save_velocity_trace(result.estimates, out / "velocities.csv")
    coasted = sum(1 for e in result.estimates if e.coasted)
    print(
        f"processed {len(result.estimates)} scans "
        f"({coasted} coasted), {len(result.trajectory)} poses -> {out}"
    )
    return 0


def _cmd_calibrate(args) -> int:
    config = _load_pipeline_config(args)
    dataset = io.load_dataset(args.dataset)
    if dataset.groundtruth_velocity_path is None:
        raise DatasetFormatError(
            f"{dataset.root}: dataset has no ground-truth velocities; "
            "cannot calibrate"
        )
    intrinsics = _resolve_intrinsics(dataset, config)
    scans = dataset.load_scans()
    gyro = dataset.load_gyro()
    result = pipeline.run(scans, gyro, KappaCalibration.disabled(), intrinsics, config)
    registered = [e for e in result.estimates if not e.coasted]
    est_times = np.array([e.timestamp for e in registered])
    est_vel = np.array([e.velocity for e in registered]).reshape(-1, 2)
    gt_times, _, _, gt_vz = io.load_groundtruth_velocity(
        dataset.groundtruth_velocity_path
    )
    cal = lift.calibrate_kappa(
        est_times, est_vel, gt_times, gt_vz, threshold=args.threshold
    )
    io.save_kappa(cal, args.output, sequence=dataset.sequence)
    print(
        f"kappa = {cal.kappa:.6g} from {cal.sample_count} samples "
        f"(speed > {cal.speed_threshold} m/s) -> {args.output}"
    )
    return 0


def _make_trajectory(args) -> simulator.SimTrajectory:
    if args.scenario == "straight":
        main = [simulator.Segment(args.duration, args.speed)]
    elif args.scenario == "arc":
        main = [simulator.Segment(args.duration, args.speed, args.yaw_rate)]
    else:
        yaw_rate = 2.0 * 2.0 * np.pi / args.duration
        main = [
            simulator.Segment(args.duration / 2.0, args.speed, yaw_rate),
            simulator.Segment(args.duration / 2.0, args.speed, -yaw_rate),
        ]
    lead = [simulator.Segment(args.initial_stop, 0.0)] if args.initial_stop > 0 else []
    return simulator.SimTrajectory(lead + main)


def _cmd_simulate(args) -> int:
    rng = np.random.default_rng(args.seed)
    traj = _make_trajectory(args)
    max_range = args.min_range + args.range_bins * args.range_resolution
    samples = np.array(
        [traj.planar_pose(t)[0] for t in np.linspace(0, traj.duration, 200)]
    )
    center = 0.5 * (samples.min(axis=0) + samples.max(axis=0))
    extent = float((samples.max(axis=0) - samples.min(axis=0)).max()) + 1.6 * max_range
    world = simulator.ScattererWorld.random(
        args.scatterers, extent, rng, center=center, tilt=np.radians(args.tilt_deg)
    )
    intrinsics = RadarIntrinsics(args.doppler_gain, args.range_resolution, args.min_range)
    bias = None
    if args.gyro_bias:
        parts = [float(v) for v in args.gyro_bias.split(",")]
        if len(parts) != 3:
            raise ValueError("--gyro-bias expects three comma-separated values")
        bias = np.array(parts)
    dataset = simulator.generate_dataset(
        args.output,
        traj,
        world,
        intrinsics,
        azimuth_count=args.azimuths,
        range_bins=args.range_bins,
        scan_hz=args.scan_hz,
        gyro_hz=args.gyro_hz,
        beam_sigma=args.beam_sigma,
        noise_sigma=args.noise_intensity,
        gyro_noise_sigma=args.gyro_noise,
        gyro_bias=bias,
        seed=args.seed,
        sequence=f"sim-{args.scenario}-seed{args.seed}",
    )
    print(
        f"wrote {len(dataset.scan_paths)} scans ({args.azimuths}x{args.range_bins}) "
        f"to {dataset.root}"
    )
    return 0


def _cmd_evaluate(args) -> int:
    gt = io.load_trajectory(args.groundtruth)
    est = io.load_trajectory(args.estimate)
    lengths = evaluation.DEFAULT_SEGMENT_LENGTHS
    if args.lengths:
        lengths = tuple(float(v) for v in args.lengths.split(","))
    reports = [("SE(3)", evaluation.kitti_error(gt, est, lengths))]
    if args.se2:
        reports.append(
            (
                "SE(2)",
                evaluation.kitti_error(
                    evaluation.project_se2(gt), evaluation.project_se2(est), lengths
                ),
            )
        )
    csv_lines = ["frame,length_m,translation_error_pct,rotation_error_deg_per_100m,segments"]
    for label, report in reports:
        if report.diagnostic:
            print(f"{label}: no result ({report.diagnostic})")
            continue
        print(f"{label}: {report.summary()}")
        print(f"  {'length_m':>8}  {'trans_pct':>9}  {'rot_deg_100m':>12}  {'segments':>8}")
        for row in report.per_length:
            print(
                f"  {row.length:>8.0f}  {row.translation_error:>9.2f}  "
                f"{row.rotation_error:>12.2f}  {row.segment_count:>8}"
            )
            csv_lines.append(
                f"{label},{row.length:.0f},{row.translation_error!r},"
                f"{row.rotation_error!r},{row.segment_count}"
            )
        csv_lines.append(
            f"{label},overall,{report.translation_error!r},"
            f"{report.rotation_error!r},{report.segment_count}"
        )
    if args.output:
        Path(args.output).write_text("\n".join(csv_lines) + "\n")
    failed = any(report.diagnostic for _, report in reports)
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radarodom",
        description="Direct radar-inertial SE(3) odometry tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("odom", help="run odometry over a dataset")
    p.add_argument("--dataset", required=True, help="dataset directory (with manifest.txt)")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--config", help="pipeline configuration file")
    p.add_argument("--kappa-file", help="vertical-velocity calibration file")
    p.set_defaults(func=_cmd_odom)

    p = sub.add_parser("calibrate", help="calibrate the vertical-velocity scale")
    p.add_argument("--dataset", required=True)
    p.add_argument("--output", required=True, help="kappa file to write")
    p.add_argument("--config", help="pipeline configuration file")
    p.add_argument("--threshold", type=float, default=3.0,
                   help="planar speed threshold for inclusion (m/s)")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--output", required=True, help="dataset directory to create")
    p.add_argument("--scenario", choices=("straight", "arc", "figure-eight"),
                   default="figure-eight")
    p.add_argument("--speed", type=float, default=10.0)
    p.add_argument("--yaw-rate", type=float, default=0.2, help="arc scenario only (rad/s)")
    p.add_argument("--duration", type=float, default=60.0)
    p.add_argument("--initial-stop", type=float, default=0.0,
                   help="standstill lead-in before the scenario (s)")
    p.add_argument("--tilt-deg", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--azimuths", type=int, default=200)
    p.add_argument("--range-bins", type=int, default=500)
    p.add_argument("--scan-hz", type=float, default=4.0)
    p.add_argument("--gyro-hz", type=float, default=100.0)
    p.add_argument("--range-resolution", type=float, default=0.25)
    p.add_argument("--min-range", type=float, default=2.5)
    p.add_argument("--doppler-gain", type=float, default=1.5)
    p.add_argument("--beam-sigma", type=float, default=2.0)
    p.add_argument("--noise-intensity", type=float, default=0.0)
    p.add_argument("--gyro-noise", type=float, default=0.0)
    p.add_argument("--gyro-bias", help="bx,by,bz (rad/s)")
    p.add_argument("--scatterers", type=int, default=250)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("evaluate", help="KITTI relative errors of an estimate")
    p.add_argument("--groundtruth", required=True)
    p.add_argument("--estimate", required=True)
    p.add_argument("--se2", action="store_true",
                   help="also evaluate the planar projection")
    p.add_argument("--lengths", help="comma-separated segment lengths in meters")
    p.add_argument("--output", help="CSV report path")
    p.set_defaults(func=_cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DatasetFormatError, MissingDataError, CalibrationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
