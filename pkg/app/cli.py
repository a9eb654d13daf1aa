"""
Command-line entry point.

    ris-slnr sweep    [--config FILE] [--trials N] [--seed S] [--jobs J] [--solver-preset P] [key=value ...]
    ris-slnr heatmap  [--method M] [--faulty B] [--grid 60x60] [--average n]
    ris-slnr patterns [--trials N]
    ris-slnr validate
    ris-slnr dump-config

Precedence: flags > key=value overrides > config file > defaults.
RIS_SOLVER_PRESET stands in for --solver-preset when the flag is absent.
Exit codes: 0 ok, 2 config error, 3 solver failure budget exceeded,
4 validation failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import ValidationError

from app.core.config import settings
from app.core.logging import configure_logging
from app.schemas.experiment import Command, SweepSpec
from app.schemas.scenario import GridSpec, ScenarioConfig
from app.services.channel_service import ChannelServiceError
from app.services.experiment_service import (
    ExperimentServiceError,
    run_heatmap,
    run_pattern_study,
    run_sweep,
    write_diagnostics_csv,
    write_heatmap_csv,
    write_mask_csv,
    write_metadata,
    write_sweep_csv,
)
from app.services.fault_service import FaultServiceError
from app.services.optimizer_service import OptimizerServiceError
from app.services.scenario_service import ScenarioServiceError, dump_config, load_config, parse_config_text
from app.services.validation_service import run_checks
from worker.config import Method, get_methods, get_patterns
from worker.sdp import SolverError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDATE = 4

_SERVICE_ERRORS = (
    ScenarioServiceError,
    ChannelServiceError,
    FaultServiceError,
    OptimizerServiceError,
    ExperimentServiceError,
    SolverError,
)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="key-value scenario file")
    common.add_argument("--out", type=str, default=None, help="output directory")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--trials", type=int, default=None)
    common.add_argument("--jobs", type=int, default=None, help="worker processes for trials")
    common.add_argument("--method", type=str, choices=get_methods(), default=None)
    common.add_argument("--faulty", type=int, default=None, help="number of faulty elements B")
    common.add_argument("--pattern", type=str, choices=get_patterns(), default=None)
    common.add_argument("--grid", type=str, default=None, help="heatmap raster, e.g. 60x60")
    common.add_argument("--average", type=int, default=1, help="NLoS redraws averaged per heatmap cell")
    common.add_argument("--solver-preset", type=str, choices=["default", "strict", "fast"], default=None,
                        help="solver limits; strict/fast replace the scenario tolerances")
    common.add_argument("--log-level", type=str, default=None)
    common.add_argument("overrides", nargs="*", metavar="key=value")

    parser = argparse.ArgumentParser(prog="ris-slnr", description="Faulty-RIS leakage-aware configuration study")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("sweep", parents=[common], help="SLNR/SNR versus number of faulty elements")
    sub.add_parser("heatmap", parents=[common], help="received power map of one method")
    sub.add_parser("patterns", parents=[common], help="SLNR/SNR versus fault pattern")
    sub.add_parser("validate", parents=[common], help="run the fast invariant suite")
    sub.add_parser("dump-config", parents=[common], help="print the resolved config")
    return parser


def _parse_overrides(pairs: List[str]) -> Dict[str, str]:
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise ScenarioServiceError(detail=f"override {pair!r} is not key=value")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def _to_command(args: argparse.Namespace) -> Command:
    return Command(
        subcommand=args.subcommand,
        config_path=args.config or settings.DEFAULT_CONFIG,
        overrides=_parse_overrides(args.overrides),
        output_dir=args.out or settings.OUTPUT_DIR,
        seed=args.seed,
        trials=args.trials,
        jobs=args.jobs if args.jobs is not None else settings.JOBS,
        method=args.method,
        faulty=args.faulty,
        pattern=args.pattern,
        grid=args.grid,
        average=args.average,
        solver_preset=args.solver_preset or settings.SOLVER_PRESET,
    )


def resolve_config(command: Command) -> ScenarioConfig:
    overrides = dict(command.overrides)
    if command.seed is not None:
        overrides["seed"] = str(command.seed)
    if command.trials is not None:
        overrides["trials"] = str(command.trials)
    if command.pattern is not None:
        overrides["pattern"] = command.pattern.value
    if command.solver_preset is not None:
        overrides["solver_preset"] = command.solver_preset
    if command.config_path:
        return load_config(command.config_path, overrides)
    return parse_config_text("", overrides)


def _grid(command: Command, cfg: ScenarioConfig) -> GridSpec:
    if command.grid is None:
        return GridSpec(nx=cfg.heatmap_nx, ny=cfg.heatmap_ny, average=command.average)
    try:
        nx, ny = (int(part) for part in command.grid.lower().split("x"))
        return GridSpec(nx=nx, ny=ny, average=command.average)
    except (ValueError, ValidationError) as exc:
        raise ScenarioServiceError(detail=f"--grid expects NXxNY, got {command.grid!r}", key="grid") from exc


def _metadata(out: Path, cfg: ScenarioConfig, command: Command) -> None:
    write_metadata(out / "metadata.json", cfg, command.model_dump(mode="json"))


def cmd_sweep(command: Command, cfg: ScenarioConfig) -> int:
    out = Path(command.output_dir)
    counts = [command.faulty] if command.faulty is not None else list(cfg.fault_counts)
    methods = [command.method] if command.method is not None else list(Method)
    spec = SweepSpec(fault_counts=counts, methods=methods, trials=cfg.trials, pattern=cfg.pattern)
    records = run_sweep(spec, cfg, jobs=command.jobs, max_failure_rate=settings.MAX_FAILURE_RATE)
    write_sweep_csv(out / "sweep.csv", records)
    write_diagnostics_csv(out / "sweep_diagnostics.csv", records)
    _metadata(out, cfg, command)
    for r in records:
        print(f"B={r.fault_count:<3d} {r.method.value:<9s} SLNR {r.mean_slnr_db:8.2f} dB  SNR {r.mean_snr_db:8.2f} dB  ({r.trials} ok, {r.failures} failed)")
    return EXIT_OK


def cmd_patterns(command: Command, cfg: ScenarioConfig) -> int:
    out = Path(command.output_dir)
    records = run_pattern_study(cfg, list(Method), cfg.trials, jobs=command.jobs,
                                max_failure_rate=settings.MAX_FAILURE_RATE)
    write_sweep_csv(out / "patterns.csv", records, by_pattern=True)
    write_diagnostics_csv(out / "patterns_diagnostics.csv", records)
    _metadata(out, cfg, command)
    for r in records:
        print(f"{r.key:<13s} {r.method.value:<9s} SLNR {r.mean_slnr_db:8.2f} dB  SNR {r.mean_snr_db:8.2f} dB")
    return EXIT_OK


def cmd_heatmap(command: Command, cfg: ScenarioConfig) -> int:
    out = Path(command.output_dir)
    fault_count = command.faulty if command.faulty is not None else 10
    result = run_heatmap(cfg, command.method or Method.MAX_SLNR, fault_count, _grid(command, cfg))
    write_heatmap_csv(out / f"heatmap_{result.method.value}.csv", result.power_map)
    write_mask_csv(out / "mask.csv", result.mask)
    _metadata(out, cfg, command)
    print(f"heatmap {result.method.value} B={fault_count}: wrote {out}")
    return EXIT_OK


def cmd_validate(command: Command, cfg: ScenarioConfig) -> int:
    results = run_checks()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATE


def cmd_dump_config(command: Command, cfg: ScenarioConfig) -> int:
    sys.stdout.write(dump_config(cfg))
    return EXIT_OK


_COMMANDS = {
    "sweep": cmd_sweep,
    "heatmap": cmd_heatmap,
    "patterns": cmd_patterns,
    "validate": cmd_validate,
    "dump-config": cmd_dump_config,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG

    configure_logging(args.log_level or settings.LOG_LEVEL)
    try:
        command = _to_command(args)
        cfg = resolve_config(command)
        return _COMMANDS[command.subcommand](command, cfg)
    except ValidationError as exc:
        print(f"error[config]: {exc.errors()[0]['msg']}", file=sys.stderr)
        return EXIT_CONFIG
    except _SERVICE_ERRORS as exc:
        category = type(exc).__name__.replace("ServiceError", "").replace("Error", "").lower() or "error"
        print(f"error[{category}]: {exc.detail}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
