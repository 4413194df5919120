"""Command-line front end: one subcommand per experiment family.

    python -m displaced_radar.main ptrf   --config configs/vehicle.json --out results/ptrf
    python -m displaced_radar.main bounds --config configs/bounds.json --threads 4
    python -m displaced_radar.main image  --config configs/close_pair.json
    python -m displaced_radar.main nmse   --config configs/nmse_sweep.json --seed 7
    python -m displaced_radar.main sync   --config configs/sync.json

Flags override the configuration file, the file overrides RADAR_* environment
variables. Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from displaced_radar.analytics.bounds import BOUND_PANELS, MeasurementNoise, panel_contour, point_cloud_noise_from_raw
from displaced_radar.config import RunConfig, RuntimeSettings, load_from_env, load_run_config
from displaced_radar.errors import ConfigurationError, RadarError
from displaced_radar.execution.parallel_executor import ParallelExecutor
from displaced_radar.imaging.dictionary import (
    PTRF_MODES,
    BlockDictionary,
    build_grid_steering,
    half_power_width,
    ptrf,
    ptrf_cut,
)
from displaced_radar.imaging.recovery import block_omp
from displaced_radar.imaging.sync import estimate_offsets, select_anchor
from displaced_radar.monitoring.logging import configure_logging
from displaced_radar.monitoring.performance_monitor import PerformanceTimer, get_performance_monitor
from displaced_radar.orchestration.experiments import SCHEMES, noise_stopping, noise_variance_for, run_nmse_sweep, run_scenario
from displaced_radar.orchestration.scenarios import scenario_names
from displaced_radar.simulation.signal import NoiseSpec, synthesize_coherent
from displaced_radar.storage.cube_io import save_cube
from displaced_radar.storage.reporting import (
    save_contour_csv,
    save_cut_csv,
    save_grid_csv,
    save_image_grids,
    save_nmse_table,
    save_pgm,
    save_point_cloud_noise,
    save_scenario_summary,
    save_sparse_image_csv,
    save_sync_report,
    save_widths_csv,
    write_manifest,
)

logger = logging.getLogger(__name__)

LOG_LEVELS = ("debug", "info", "warning", "error", "critical")


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with status 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@dataclass
class RunContext:
    """Resolved settings shared by every subcommand."""

    config: RunConfig
    settings: RuntimeSettings
    out: Path
    seed: int
    threads: int
    save_cube: bool = False

    def executor(self) -> ParallelExecutor:
        return ParallelExecutor(max_workers=self.threads)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (defaults when omitted)")
    common.add_argument("--out", help="output directory (default: RADAR_OUTPUT_DIR or ./results)")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--threads", type=int, help="worker threads")
    common.add_argument("--log-level", choices=LOG_LEVELS, help="logging level")

    parser = _Parser(prog="displaced_radar", description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ptrf_parser = commands.add_parser("ptrf", parents=[common], help="point-target response grids and cuts")
    ptrf_parser.add_argument("--mode", action="append", choices=PTRF_MODES, help="restrict to a mode (repeatable)")

    bounds_parser = commands.add_parser("bounds", parents=[common], help="position-bound contours")
    bounds_parser.add_argument(
        "--panel", action="append", choices=[p.name for p in BOUND_PANELS], help="restrict to a panel (repeatable)"
    )

    image_parser = commands.add_parser("image", parents=[common], help="image a named scenario in every mode")
    image_parser.add_argument("--scenario", choices=scenario_names())
    image_parser.add_argument("--snr-db", type=float)

    nmse_parser = commands.add_parser("nmse", parents=[common], help="Monte-Carlo NMSE sweep")
    nmse_parser.add_argument("--trials", type=int)
    nmse_parser.add_argument("--snr-db", type=float, action="append", help="SNR point in dB (repeatable)")
    nmse_parser.add_argument("--scheme", action="append", choices=SCHEMES, help="scheme to run (repeatable)")

    sync_parser = commands.add_parser("sync", parents=[common], help="estimate sensor clock offsets")
    sync_parser.add_argument("--snr-db", type=float)
    sync_parser.add_argument("--save-cube", action="store_true", help="also export the simulated cube")
    return parser


def _apply_overrides(config: RunConfig, args: argparse.Namespace) -> None:
    """Fold subcommand options into the configuration so the manifest reproduces the run."""
    if getattr(args, "mode", None):
        config.ptrf.modes = list(args.mode)
    if getattr(args, "panel", None):
        config.bounds.panels = list(args.panel)
    if getattr(args, "scenario", None):
        config.experiment.scenario = args.scenario
    if getattr(args, "trials", None) is not None:
        config.experiment.n_trials = args.trials
    if getattr(args, "scheme", None):
        config.experiment.schemes = list(args.scheme)
    snr = getattr(args, "snr_db", None)
    if snr is not None:
        if args.command == "nmse":
            config.experiment.snr_db = list(snr)
        elif args.command == "sync":
            config.sync.snr_db = snr
        else:
            config.experiment.snr_db = [snr]
    errors = [f"experiment.{e}" for e in config.experiment.validate()]
    errors += [f"sync.{e}" for e in config.sync.validate()]
    if errors:
        raise ConfigurationError("; ".join(errors))


def resolve_context(args: argparse.Namespace, settings: RuntimeSettings) -> RunContext:
    config = load_run_config(args.config)
    _apply_overrides(config, args)
    seed = next(v for v in (args.seed, config.seed, settings.seed) if v is not None)
    threads = next(v for v in (args.threads, config.threads, settings.threads) if v is not None)
    if seed < 0:
        raise ConfigurationError("--seed must be >= 0")
    if threads < 1:
        raise ConfigurationError("--threads must be >= 1")
    config.seed, config.threads = seed, threads
    out = Path(args.out or settings.output_dir)
    return RunContext(
        config=config, settings=settings, out=out, seed=seed, threads=threads,
        save_cube=bool(getattr(args, "save_cube", False)),
    )


def cmd_ptrf(ctx: RunContext) -> List[Path]:
    """Grids (CSV + PGM) and fine range / cross-range cuts for every mode."""
    scene = ctx.config.scene.build()
    if not scene.targets:
        raise ConfigurationError("ptrf needs at least one target in scene.targets")
    target = scene.targets[0]
    grid = ctx.config.grid.build()
    section = ctx.config.ptrf
    outputs: List[Path] = []
    widths: Dict[str, Dict[str, float]] = {}
    for mode in section.modes:
        with PerformanceTimer("ptrf", mode):
            values = ptrf(scene, grid, target.position, mode, target.reflectivity)
        outputs.append(save_grid_csv(grid.x, grid.y, values, ctx.out / f"ptrf_{mode}.csv"))
        outputs.append(save_pgm(values, ctx.out / f"ptrf_{mode}.pgm"))
        widths[mode] = {}
        for axis in ("range", "cross_range"):
            offsets, cut = ptrf_cut(
                scene, target.position, axis, mode,
                half_span_m=section.half_span_m, step_m=section.step_m, alphas=target.reflectivity,
            )
            outputs.append(save_cut_csv(offsets, cut, ctx.out / f"{axis}_cut_{mode}.csv"))
            outputs.append(save_cut_csv(offsets, cut, ctx.out / f"{axis}_cut_{mode}_db.csv", in_db=True))
            widths[mode][axis] = half_power_width(offsets, cut)
        logger.info(
            "PTRF %s: -3 dB range width %.3f m, cross-range width %.3f m",
            mode, widths[mode]["range"], widths[mode]["cross_range"],
        )
    outputs.append(save_widths_csv(widths, ctx.out / "widths.csv"))
    return outputs


def cmd_bounds(ctx: RunContext) -> List[Path]:
    """One averaged-bound contour CSV per selected panel."""
    section = ctx.config.bounds
    scene = ctx.config.scene.build()
    prior = section.prior(ctx.seed)
    alphas = section.alpha_values()
    if alphas is None:
        alphas = np.ones(scene.n_radars, dtype=complex)
    if alphas.size != scene.n_radars:
        raise ConfigurationError(f"bounds.alphas needs {scene.n_radars} values, got {alphas.size}")
    outputs: List[Path] = []
    if section.derive_point_cloud_noise:
        range_std, azimuth_std = point_cloud_noise_from_raw(scene, section.raw_variance, prior.mean, alphas[0])
        noise = MeasurementNoise.from_std(scene.n_radars, range_std, azimuth_std, raw_variance=section.raw_variance)
        outputs.append(save_point_cloud_noise(range_std, azimuth_std, ctx.out / "point_cloud_noise.csv"))
        logger.info("Derived point-cloud noise: range std %s m, azimuth std %s rad", range_std, azimuth_std)
    else:
        noise = section.noise(scene.n_radars)
    grid_x, grid_y = section.axes()
    executor = ctx.executor()
    for panel in BOUND_PANELS:
        if panel.name not in section.panels:
            continue
        with PerformanceTimer("bounds", panel.name):
            contour = panel_contour(
                panel, scene, noise, prior, grid_x, grid_y,
                alphas=alphas, options=section.options(), executor=executor,
            )
        outputs.append(save_contour_csv(contour, ctx.out / f"bound_{panel.name}.csv"))
    return outputs


def cmd_image(ctx: RunContext) -> List[Path]:
    """Sparse images of a named scenario in every processing mode, plus the sync estimate."""
    name = ctx.config.experiment.scenario
    if name is None:
        raise ConfigurationError(f"image needs a scenario; valid scenarios: {', '.join(scenario_names())}")
    experiment = ctx.config.build_experiment(
        seed=ctx.seed, threads=ctx.threads, memory_budget_bytes=ctx.settings.memory_budget_bytes
    )
    report = run_scenario(experiment, name)
    outputs: List[Path] = []
    for mode, image in report.images.items():
        stem = f"image_{mode}"
        outputs.append(save_sparse_image_csv(image, report.grid, ctx.out / f"{stem}.csv", single_sensor=mode == "single"))
        outputs.extend(save_image_grids(image, report.grid, ctx.out, stem).values())
    if report.sync is not None:
        outputs.extend(
            save_sync_report(report.sync, ctx.out, true_offsets_s=experiment.scene.sync_offsets).values()
        )
    outputs.append(save_scenario_summary(report, ctx.out / "scenario_summary.csv"))
    return outputs


def cmd_nmse(ctx: RunContext) -> List[Path]:
    """NMSE table over the configured schemes and SNR points."""
    experiment = ctx.config.build_experiment(
        seed=ctx.seed, threads=ctx.threads, memory_budget_bytes=ctx.settings.memory_budget_bytes
    )
    table = run_nmse_sweep(experiment, ctx.executor())
    return list(save_nmse_table(table, ctx.out).values())


def cmd_sync(ctx: RunContext) -> List[Path]:
    """Simulate the scene with its injected offsets and estimate them back."""
    section = ctx.config.sync
    scene = ctx.config.scene.build()
    if not scene.targets:
        raise ConfigurationError("sync needs at least one target in scene.targets")
    variance = 0.0 if section.snr_db is None else noise_variance_for(section.snr_db)
    cube = synthesize_coherent(scene, NoiseSpec(variance=variance, seed=ctx.seed))
    vector = cube.vector()
    outputs: List[Path] = []

    grid = ctx.config.grid.build()
    image = None
    if section.anchors is None or section.amplitude_source == "image":
        steering = build_grid_steering(
            scene, grid, memory_budget_bytes=ctx.settings.memory_budget_bytes, executor=ctx.executor()
        )
        image = block_omp(BlockDictionary(steering), vector, noise_stopping(ctx.config.solvers, vector.size, variance))
    if section.anchors is None:
        anchors: Sequence = select_anchor(image, grid, section.min_isolation_m, section.anchor_count)
        estimate = estimate_offsets(scene, vector, anchors, grid=grid, amplitude_source=section.amplitude_source, image=image)
    elif section.amplitude_source == "image":
        anchors = [grid.cell_of(a) for a in section.anchors]
        estimate = estimate_offsets(scene, vector, anchors, grid=grid, amplitude_source="image", image=image)
    else:
        estimate = estimate_offsets(scene, vector, section.anchors)

    outputs.extend(save_sync_report(estimate, ctx.out, true_offsets_s=scene.sync_offsets).values())
    if image is not None:
        outputs.append(save_sparse_image_csv(image, grid, ctx.out / "sync_image.csv"))
    if ctx.save_cube:
        outputs.extend(save_cube(cube, ctx.out / "cube"))
    for row in estimate.to_rows():
        logger.info("Sensor %d offset %.6e s (confidence %.3f)", row["sensor"], row["offset_s"], row["confidence"])
    return outputs


COMMANDS: Dict[str, Callable[[RunContext], List[Path]]] = {
    "ptrf": cmd_ptrf,
    "bounds": cmd_bounds,
    "image": cmd_image,
    "nmse": cmd_nmse,
    "sync": cmd_sync,
}


def run(args: argparse.Namespace) -> Path:
    """Run one parsed command; returns the manifest path."""
    settings = load_from_env()
    configure_logging(args.log_level or settings.log_level, log_file=settings.log_file)
    ctx = resolve_context(args, settings)
    logger.info("Running %s (seed %d, %d thread(s)) into %s", args.command, ctx.seed, ctx.threads, ctx.out)
    outputs = COMMANDS[args.command](ctx)
    manifest = write_manifest(
        ctx.out / "manifest.json", ctx.config.to_dict(), command=args.command, seed=ctx.seed, outputs=outputs
    )
    get_performance_monitor().log_summary()
    print(f"{args.command}: wrote {len(outputs) + 1} files to {ctx.out}")
    return manifest


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        run(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (RadarError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
