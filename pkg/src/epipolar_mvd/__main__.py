"""CLI entry point for epipolar-mvd."""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checks import SIZES, SUITES, run_gradcheck, run_suite
from .config import Config
from .diffusion import (
    SyntheticEncoder,
    linear_beta_schedule,
    load_denoiser,
    run_train_demo,
    sample_multiview,
)
from .errors import EpipolarError, ShapeError
from .geometry import (
    CameraIntrinsics,
    ViewLayout,
    generate_layout,
    read_layout_json,
    uniform_elevation_layout,
    write_layout_json,
)
from .sampling import build_sample_volume, save_sample_map
from .scenes import SyntheticScene, make_dataset, raycast_render, save_render_set
from .tensor import DeterministicRng, Tensor, tensor_read, tensor_write
from .utils import MetricsCollector, configure_logging, get_logger
from .utils.observability import (
    capture_exception,
    command_span,
    setup_opentelemetry,
    setup_sentry,
)

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAILED = 2

SAMPLE_STREAM = 40
EVAL_ELEVATION_DEG = 30.0


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1; 2 is reserved for failed verifications."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _write_json(data: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2))


def _report(data: dict) -> None:
    print(json.dumps(data, indent=2))


def _default_layout(config: Config) -> ViewLayout:
    camera = config.camera
    intrinsics = CameraIntrinsics.from_fov_deg(camera.width, camera.height, camera.fov_y_deg)
    return generate_layout(camera.elevations_deg, camera.azimuth_count, camera.radius, intrinsics)


def _make_scene(kind: str, seed: int) -> SyntheticScene:
    if kind == "voxel":
        return SyntheticScene.voxel_blob(seed=seed)
    return SyntheticScene.sphere()


def _load_feature_maps(directory: Path, count: int) -> list[Tensor]:
    """
    Feature maps for every view: a stacked ``rgb.etz`` (as written by ``render``) or
    one ``view_XXX.etz`` file per view.
    """
    stacked = directory / "rgb.etz"
    if stacked.exists():
        maps = tensor_read(stacked)
        if maps.shape[0] != count:
            raise ShapeError(f"{stacked} holds {maps.shape[0]} views, layout has {count}")
        return list(maps)
    return [tensor_read(directory / f"view_{i:03d}.etz") for i in range(count)]


def cmd_layout(args: argparse.Namespace, config: Config) -> int:
    camera = config.camera
    intrinsics = CameraIntrinsics.from_fov_deg(camera.width, camera.height, camera.fov_y_deg)
    if args.uniform is not None:
        layout = uniform_elevation_layout(args.uniform, args.elevations, args.radius, intrinsics)
    else:
        layout = generate_layout(args.elevations, args.azimuths, args.radius, intrinsics)
    path = args.out / "cameras.json"
    write_layout_json(layout, path)
    _report({"views": len(layout), "cameras": str(path), "fingerprint": layout.fingerprint})
    return EXIT_OK


def cmd_sample_map(args: argparse.Namespace, config: Config) -> int:
    layout = read_layout_json(args.cameras)
    feature_maps = _load_feature_maps(args.features_dir, len(layout))
    sample_map = build_sample_volume(
        args.target, layout, feature_maps, args.k, args.samples, args.near, args.far
    )
    save_sample_map(sample_map, args.out)
    _report(
        {
            **sample_map.sidecar(),
            "features_shape": list(sample_map.features.shape),
            "valid_fraction": float(sample_map.valid.mean()),
        }
    )
    return EXIT_OK


def _verdict(metrics: MetricsCollector, path: Path) -> int:
    metrics.export_to_file(path, include_timing=False)
    report = metrics.to_dict(include_timing=False)
    _report(report)
    return EXIT_OK if metrics.all_passed else EXIT_FAILED


def cmd_check(args: argparse.Namespace, config: Config) -> int:
    metrics = run_suite(args.suite, seed=config.seed, fault=args.fault)
    return _verdict(metrics, args.out / "check_report.json")


def cmd_gradcheck(args: argparse.Namespace, config: Config) -> int:
    metrics = run_gradcheck(args.size, seed=config.seed, corrupt=args.corrupt)
    return _verdict(metrics, args.out / "gradcheck_report.json")


def cmd_render(args: argparse.Namespace, config: Config) -> int:
    scene = _make_scene(args.scene, config.seed)
    layout = read_layout_json(args.layout) if args.layout else _default_layout(config)
    renders = make_dataset(scene, layout, args.res, args.res, shading=args.shading)
    save_render_set(renders, args.out, ppm=args.ppm)
    foreground = float(np.mean([renders.foreground(i).mean() for i in range(len(renders))]))
    _report(
        {
            "scene": args.scene,
            "views": len(renders),
            "resolution": [renders.height, renders.width],
            "foreground_fraction": foreground,
            "out": str(args.out),
        }
    )
    return EXIT_OK


def cmd_train_demo(args: argparse.Namespace, config: Config) -> int:
    metrics = MetricsCollector()
    result = run_train_demo(
        config,
        args.steps,
        learning_rate=args.lr,
        seed=config.seed,
        out_dir=args.out,
        metrics=metrics,
    )
    summary = result.to_dict()
    summary.pop("loss")
    summary["checkpoint"] = str(result.checkpoint)
    _report(summary)
    return EXIT_OK if result.target_met else EXIT_FAILED


def cmd_sample(args: argparse.Namespace, config: Config) -> int:
    denoiser = load_denoiser(args.checkpoint)
    diffusion = denoiser.config
    if args.layout:
        layout = read_layout_json(args.layout)
    else:
        camera = config.camera
        intrinsics = CameraIntrinsics.from_fov_deg(camera.width, camera.height, camera.fov_y_deg)
        layout = generate_layout((EVAL_ELEVATION_DEG,), diffusion.views, camera.radius, intrinsics)

    intrinsics, pose = layout[args.input_view].camera
    rgb, _ = raycast_render(_make_scene(args.scene, config.seed), intrinsics, pose)
    encoder = SyntheticEncoder.create(
        diffusion.latent_channels,
        diffusion.latent_size,
        seed=denoiser.seed,
        scale=diffusion.latent_scale,
    )
    input_latent = encoder.encode(rgb[None])[0]
    cond = denoiser.condition(layout, args.input_view, input_latent)
    schedule = linear_beta_schedule(diffusion.timesteps, diffusion.beta_start, diffusion.beta_end)
    latents = sample_multiview(
        denoiser, schedule, layout, cond, DeterministicRng(config.seed, stream=SAMPLE_STREAM)
    )

    args.out.mkdir(parents=True, exist_ok=True)
    files = []
    for index, latent in enumerate(latents):
        path = args.out / f"view_{index:03d}.etz"
        tensor_write(latent, path)
        files.append(path.name)
    write_layout_json(layout, args.out / "cameras.json")
    manifest = {
        "views": len(files),
        "latent_shape": list(latents.shape[1:]),
        "input_view": args.input_view,
        "scene": args.scene,
        "checkpoint": str(args.checkpoint),
        "files": files,
    }
    _write_json(manifest, args.out / "samples.json")
    logger.info(f"Sampled {len(files)} views into {args.out}")
    _report(manifest)
    return EXIT_OK


COMMANDS = {
    "layout": cmd_layout,
    "sample-map": cmd_sample_map,
    "check": cmd_check,
    "gradcheck": cmd_gradcheck,
    "render": cmd_render,
    "train-demo": cmd_train_demo,
    "sample": cmd_sample,
}


def build_parser(config: Config) -> argparse.ArgumentParser:
    """Argument parser whose defaults come from ``config``."""
    common = _Parser(add_help=False)
    common.add_argument(
        "--seed", type=int, default=config.seed, help=f"Random seed (default: {config.seed})"
    )
    common.add_argument("--out", type=Path, help="Output directory (default: runs/<command>)")
    common.add_argument(
        "--log-level",
        type=str,
        default=config.logging.level,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help=f"Logging level (default: {config.logging.level})",
    )

    parser = _Parser(
        prog="epipolar-mvd",
        description="Epipolar MVD - epipolar-constrained multiview diffusion toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    camera = config.camera
    layout = commands.add_parser(
        "layout", parents=[common], help="Write the camera layout as JSON"
    )
    layout.add_argument(
        "--elevations",
        type=float,
        nargs="+",
        default=list(camera.elevations_deg),
        help="Ring elevations in degrees (default: -10 0 10 20 30 40)",
    )
    layout.add_argument(
        "--azimuths",
        type=int,
        default=camera.azimuth_count,
        help=f"Azimuths per ring (default: {camera.azimuth_count})",
    )
    layout.add_argument(
        "--radius",
        type=float,
        default=camera.radius,
        help=f"Camera distance (default: {camera.radius})",
    )
    layout.add_argument(
        "--uniform",
        type=int,
        metavar="N",
        help="N views evenly spread in azimuth, cycling through the elevations",
    )

    sampling = config.sampling
    sample_map = commands.add_parser(
        "sample-map", parents=[common], help="Sample feature maps along a target view's rays"
    )
    sample_map.add_argument("--cameras", type=Path, required=True, help="Camera layout JSON")
    sample_map.add_argument(
        "--features-dir",
        type=Path,
        required=True,
        help="Directory with rgb.etz [N, H, W, C] or view_XXX.etz [H, W, C] files",
    )
    sample_map.add_argument("--target", type=int, default=0, help="Target view (default: 0)")
    sample_map.add_argument(
        "-K",
        dest="k",
        type=int,
        default=sampling.num_views_nearby,
        help=f"Views sampled, target included (default: {sampling.num_views_nearby})",
    )
    sample_map.add_argument(
        "-S",
        dest="samples",
        type=int,
        default=sampling.samples_per_ray,
        help=f"Samples per ray (default: {sampling.samples_per_ray})",
    )
    sample_map.add_argument("--near", type=float, help="Near depth (default: from layout)")
    sample_map.add_argument("--far", type=float, help="Far depth (default: from layout)")

    check = commands.add_parser("check", parents=[common], help="Run an invariant suite")
    check.add_argument(
        "--suite", default="all", choices=[*SUITES, "all"], help="Suite to run (default: all)"
    )
    check.add_argument(
        "--fault",
        default=os.getenv("EPIPOLAR_FAULT"),
        help="Corrupt the named check (test hook; default: $EPIPOLAR_FAULT)",
    )

    gradcheck = commands.add_parser(
        "gradcheck", parents=[common], help="Finite-difference gradient verification"
    )
    gradcheck.add_argument(
        "--size", default="micro", choices=sorted(SIZES), help="Problem size (default: micro)"
    )
    gradcheck.add_argument(
        "--corrupt", action="store_true", help="Corrupt analytic gradients (test hook)"
    )

    render = commands.add_parser("render", parents=[common], help="Raycast a synthetic scene")
    render.add_argument("--scene", default="sphere", choices=["sphere", "voxel"])
    render.add_argument("--layout", type=Path, help="Camera layout JSON (default: 96 views)")
    render.add_argument(
        "--res", type=int, default=camera.height, help=f"Image size (default: {camera.height})"
    )
    render.add_argument("--ppm", action="store_true", help="Also write PPM previews")
    render.add_argument("--shading", action="store_true", help="Lambertian shading")

    diffusion = config.diffusion
    train = commands.add_parser(
        "train-demo", parents=[common], help="Train the ECA blocks on two synthetic scenes"
    )
    train.add_argument("--steps", type=int, default=500, help="Training steps (default: 500)")
    train.add_argument(
        "--lr",
        type=float,
        default=diffusion.learning_rate,
        help=f"Learning rate (default: {diffusion.learning_rate})",
    )

    sample = commands.add_parser(
        "sample", parents=[common], help="Generate view latents from a checkpoint"
    )
    sample.add_argument("--checkpoint", type=Path, required=True, help="train-demo checkpoint")
    sample.add_argument(
        "--layout", type=Path, help="Camera layout JSON (default: 16 views at 30 degrees)"
    )
    sample.add_argument("--scene", default="sphere", choices=["sphere", "voxel"])
    sample.add_argument("--input-view", type=int, default=0, help="Conditioning view (default: 0)")

    return parser


def _run_record(args: argparse.Namespace, config: Config) -> dict:
    flags = {
        key: str(value) if isinstance(value, Path) else value for key, value in vars(args).items()
    }
    return {
        "version": __version__,
        "command": args.command,
        "args": flags,
        "config": config.to_dict(),
    }


def main(argv: list[str] | None = None) -> int:
    """Main CLI entry point."""
    config = Config.from_env()
    args = build_parser(config).parse_args(argv)

    config.seed = args.seed
    config.logging.level = args.log_level
    if args.command == "sample-map":
        config.sampling.num_views_nearby = args.k
        config.sampling.samples_per_ray = args.samples
    if args.command == "train-demo":
        config.diffusion.learning_rate = args.lr
    args.out = args.out or Path("runs") / args.command

    log_dir = config.logging.log_dir if config.logging.enable_file_logging else None
    configure_logging(args.log_level, log_dir, args.command)
    setup_sentry(release=__version__)
    setup_opentelemetry()

    try:
        args.out.mkdir(parents=True, exist_ok=True)
        _write_json(_run_record(args, config), args.out / "run.json")
        attributes = {"seed": config.seed, "out": args.out, "suite": getattr(args, "suite", None)}
        with command_span(args.command, attributes) as span:
            code = COMMANDS[args.command](args, config)
            if span is not None:
                span.set_attribute("epipolar.exit_code", code)
        logger.info(f"{args.command} finished with exit code {code}")
        return code
    except KeyboardInterrupt:
        print("\nInterrupted by user.", file=sys.stderr)
        return EXIT_ERROR
    except (EpipolarError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as e:
        capture_exception(e, {"cli": {"command": args.command, "seed": config.seed}})
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
