"""
Experiment driver: fault-count sweeps, pattern studies and power heatmaps,
plus the CSV / JSON writers for their outputs.

Aggregation is an ordered reduction over trial records, so results do not
depend on how many processes ran the trials. Means are taken over linear
values; "db_of_mean" reports 10 log10 of the linear mean, "mean_of_db" the
mean of per-trial dB values. Standard deviations are always over per-trial
dB values.
"""

import csv
import json
import logging
from dataclasses import dataclass
from importlib import metadata
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from app.schemas.experiment import AggregateRecord, SweepSpec
from app.schemas.scenario import GridSpec, ScenarioConfig
from app.services.channel_service import build_geometry
from app.services.fault_service import fault_mask, full_configuration, pattern_fault_count
from app.services.metrics_service import PowerMap, received_power_map, to_db, watts_to_dbm
from app.services.scenario_service import Substream, dump_config, substream
from app.services.trial_service import TrialRecord, draw_trial, make_backend, run_methods, trial_jobs, TrialJob
from worker.config import FaultPattern, Method, SolverStatus
from worker.trial_worker import TrialWorker

logger = logging.getLogger(__name__)

PACKAGE_NAME = "faulty-ris-slnr"

SWEEP_COLUMNS = [
    "fault_count", "method", "mean_slnr_db", "std_slnr_db",
    "mean_snr_db", "std_snr_db", "trials", "failures",
]
PATTERN_COLUMNS = ["pattern"] + SWEEP_COLUMNS
DIAGNOSTIC_COLUMNS = [
    "key", "method", "mean_solver_iterations", "mean_bisection_steps", "fallback_rate", "uncertified_rate", "failures",
]


_UNCERTIFIED = (SolverStatus.MAX_ITER, SolverStatus.NUMERICAL_ERROR)


class ExperimentServiceError(Exception):
    def __init__(self, *, detail: str, exit_code: int = 3) -> None:
        self.exit_code = exit_code
        self.detail = detail
        super().__init__(detail)


def code_version() -> str:
    try:
        return metadata.version(PACKAGE_NAME)
    except metadata.PackageNotFoundError:
        return "unknown"


# ============================================================================
# Aggregation
# ============================================================================

def _db_stats(values: np.ndarray, mode: str) -> tuple[float, float]:
    if values.size == 0:
        return float("nan"), float("nan")
    per_trial = to_db(np.maximum(values, 1e-300))
    mean = float(np.mean(per_trial)) if mode == "mean_of_db" else float(to_db(np.mean(values)))
    return mean, float(np.std(per_trial))


def aggregate(
    records: Sequence[TrialRecord],
    methods: Sequence[Method],
    mode: str = "db_of_mean",
) -> List[AggregateRecord]:
    """One record per (key, method), keys in first-seen order."""
    by_key: Dict[str, List[TrialRecord]] = {}
    for rec in records:
        by_key.setdefault(rec.key, []).append(rec)

    out = []
    for key, group in by_key.items():
        group = sorted(group, key=lambda r: r.trial)
        for method in (Method(m) for m in methods):
            ok = [r.results[method] for r in group if method in r.results]
            failures = sum(1 for r in group if method in r.failures)
            if failures:
                logger.warning("key=%s method=%s: %d failed trial(s) excluded", key, method.value, failures)
            slnr = np.array([r.slnr for r in ok])
            snr = np.array([r.snr for r in ok])
            mean_slnr, std_slnr = _db_stats(slnr, mode)
            mean_snr, std_snr = _db_stats(snr, mode)
            out.append(AggregateRecord(
                key=key,
                fault_count=group[0].fault_count,
                pattern=group[0].pattern,
                method=method,
                mean_slnr_db=mean_slnr,
                std_slnr_db=0.0 if np.isnan(std_slnr) else std_slnr,
                mean_snr_db=mean_snr,
                std_snr_db=0.0 if np.isnan(std_snr) else std_snr,
                trials=len(ok),
                failures=failures,
                mean_solver_iterations=float(np.mean([r.solver_iterations for r in ok])) if ok else 0.0,
                mean_bisection_steps=float(np.mean([r.bisection_steps for r in ok])) if ok else 0.0,
                fallback_rate=float(np.mean([r.fallback for r in ok])) if ok else 0.0,
                uncertified_rate=float(np.mean([r.status in _UNCERTIFIED for r in ok])) if ok else 0.0,
            ))
    return out


def check_failure_budget(records: Sequence[TrialRecord], methods: Sequence[Method], max_rate: float) -> None:
    total = len(records) * len(methods)
    failed = sum(len(r.failures) for r in records)
    if total and failed / total > max_rate:
        raise ExperimentServiceError(
            detail=f"{failed} of {total} method runs failed, above the allowed rate {max_rate:.0%}",
            exit_code=3,
        )


# ============================================================================
# Experiments
# ============================================================================

def _validate_methods(methods: Iterable) -> List[Method]:
    try:
        return [Method(m) for m in methods]
    except ValueError as exc:
        raise ExperimentServiceError(detail=str(exc), exit_code=2) from exc


def run_sweep(
    spec: SweepSpec,
    cfg: ScenarioConfig,
    jobs: int = 1,
    max_failure_rate: float = 1.0,
) -> List[AggregateRecord]:
    """Every method on identical draws for each fault count and trial."""
    methods = _validate_methods(spec.methods)
    too_many = [b for b in spec.fault_counts if b > cfg.N or b < 0]
    if too_many:
        raise ExperimentServiceError(detail=f"fault counts {too_many} outside [0, N={cfg.N}]", exit_code=2)
    work = trial_jobs(cfg, spec.fault_counts, spec.trials, spec.pattern, methods)
    records = TrialWorker(jobs=jobs, worker_id="sweep").run(work)
    check_failure_budget(records, methods, max_failure_rate)
    return aggregate(records, methods, cfg.aggregate_mode)


def run_pattern_study(
    cfg: ScenarioConfig,
    methods: Sequence[Method],
    trials: int,
    fraction: float = 0.25,
    jobs: int = 1,
    max_failure_rate: float = 1.0,
) -> List[AggregateRecord]:
    """Same pipeline as the sweep with one row per fault pattern at B = fraction * N."""
    methods = _validate_methods(methods)
    work: List[TrialJob] = []
    for pattern in FaultPattern:
        count = pattern_fault_count(pattern, cfg.Nx, cfg.Ny, fraction, pad=cfg.pad_structured)
        work.extend(trial_jobs(cfg, [count], trials, pattern, methods, keys=[pattern.value]))
    records = TrialWorker(jobs=jobs, worker_id="patterns").run(work)
    check_failure_budget(records, methods, max_failure_rate)
    return aggregate(records, methods, cfg.aggregate_mode)


@dataclass
class HeatmapResult:
    power_map: PowerMap
    mask: np.ndarray
    method: Method
    fault_count: int
    snr: float
    checksum: str


def run_heatmap(
    cfg: ScenarioConfig,
    method: Method,
    fault_count: int,
    grid: GridSpec,
    trial: int = 0,
) -> HeatmapResult:
    """Single-realization power map of one method's full configuration."""
    method = _validate_methods([method])[0]
    if not 0 <= fault_count <= cfg.N:
        raise ExperimentServiceError(detail=f"fault count {fault_count} outside [0, N={cfg.N}]", exit_code=2)
    geometry = build_geometry(cfg)
    draws = draw_trial(cfg, trial, fault_count, FaultPattern(cfg.pattern), geometry)
    results, failures = run_methods(cfg, draws, trial, [method], make_backend(cfg))
    if method in failures:
        raise ExperimentServiceError(detail=f"{method.value} failed: {failures[method]}")

    result = results[method]
    v_full = full_configuration(result.config.v_R, draws.part, draws.fault.states)
    power_map = received_power_map(
        v_full, cfg, geometry, draws.channels.G, draws.channels.h[draws.cloud.ue_index], grid,
        substream(cfg.seed, trial, Substream.HEATMAP),
    )
    logger.info(
        "heatmap method=%s B=%d grid=%dx%d average=%d snr=%.2fdB",
        method.value, fault_count, grid.nx, grid.ny, grid.average, float(to_db(result.snr)),
    )
    return HeatmapResult(
        power_map=power_map,
        mask=fault_mask(draws.fault.indices, cfg.Nx, cfg.Ny),
        method=method,
        fault_count=fault_count,
        snr=result.snr,
        checksum=draws.checksum(),
    )


# ============================================================================
# Writers
# ============================================================================

def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".10g")
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def _open_for_write(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path.open("w", newline="", encoding="utf-8")
    except OSError as exc:
        raise ExperimentServiceError(detail=f"cannot write {path}: {exc}", exit_code=2) from exc


def _write_rows(path: Path, columns: List[str], rows: Iterable[Sequence]) -> Path:
    with _open_for_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def write_sweep_csv(path: Path, records: Sequence[AggregateRecord], by_pattern: bool = False) -> Path:
    columns = PATTERN_COLUMNS if by_pattern else SWEEP_COLUMNS
    rows = []
    for r in records:
        row = [getattr(r, c) for c in SWEEP_COLUMNS]
        rows.append(([r.pattern] + row) if by_pattern else row)
    return _write_rows(path, columns, rows)


def write_diagnostics_csv(path: Path, records: Sequence[AggregateRecord]) -> Path:
    return _write_rows(path, DIAGNOSTIC_COLUMNS, ([getattr(r, c) for c in DIAGNOSTIC_COLUMNS] for r in records))


def write_heatmap_csv(path: Path, power_map: PowerMap) -> Path:
    dbm = watts_to_dbm(np.maximum(power_map.power_w, 1e-300))
    rows = (
        (float(x), float(y), float(dbm[iy, ix]))
        for iy, y in enumerate(power_map.y)
        for ix, x in enumerate(power_map.x)
    )
    return _write_rows(path, ["x_m", "y_m", "power_dbm"], rows)


def write_mask_csv(path: Path, mask: np.ndarray) -> Path:
    ny, nx = mask.shape
    rows = ((ix, iy, int(mask[iy, ix])) for iy in range(ny) for ix in range(nx))
    return _write_rows(path, ["ix", "iy", "faulty"], rows)


def write_metadata(path: Path, cfg: ScenarioConfig, command: Dict[str, object]) -> Path:
    """Resolved config and code version; enough to rerun the command exactly."""
    payload = {
        "version": code_version(),
        "command": command,
        "config": dump_config(cfg),
    }
    with _open_for_write(path) as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return path
