"""
One Monte Carlo trial: draw the environment, run every requested method on
the identical draws and score them on the true channels.

Everything a trial draws comes from substreams keyed by (seed, trial), so the
same trial gives the same channels and test points for every fault count and
in any worker process.
"""

import hashlib
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from app.schemas.scenario import ScenarioConfig, db_to_linear
from app.services.channel_service import (
    ArrayGeometry,
    ChannelServiceError,
    ChannelSet,
    build_channel_set,
    build_geometry,
)
from app.services.fault_service import (
    FaultRealization,
    FaultServiceError,
    PartitionedChannels,
    partition,
    sample_fault_indices,
    sample_fault_states,
)
from app.services.metrics_service import MethodResult, RisConfig, evaluate
from app.services.optimizer_service import (
    OptimizerOutcome,
    OptimizerServiceError,
    SdpBackend,
    baseline,
    gamma_threshold,
    max_slnr,
    naive_max_snr,
    robust_max_slnr,
)
from app.services.scenario_service import Substream, TestPointCloud, sample_test_points, substream
from worker.config import FaultPattern, Method, get_limits
from worker.sdp import InteriorPointSolver, SolverError

logger = logging.getLogger(__name__)

_METHOD_ORDER = list(Method)


@dataclass(frozen=True)
class TrialDraws:
    """Environment shared by all methods of one trial."""
    cloud: TestPointCloud
    channels: ChannelSet
    fault: FaultRealization
    part: PartitionedChannels

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for arr in (
            self.cloud.positions,
            self.channels.G,
            self.channels.h,
            self.fault.indices,
            self.fault.states,
        ):
            digest.update(np.ascontiguousarray(arr).tobytes())
        return digest.hexdigest()[:16]


@dataclass
class TrialRecord:
    trial: int
    key: str
    fault_count: int
    pattern: FaultPattern
    checksum: str
    results: Dict[Method, MethodResult] = field(default_factory=dict)
    failures: Dict[Method, str] = field(default_factory=dict)


@dataclass(frozen=True)
class TrialJob:
    cfg: ScenarioConfig
    trial: int
    fault_count: int
    pattern: FaultPattern
    methods: tuple
    key: str


def make_backend(cfg: ScenarioConfig) -> SdpBackend:
    """
    Solver for cfg. The default preset takes sdp_tol, eps_eq, eps_psd and
    max_sdp_iter from the scenario; strict and fast use their fixed limits.
    """
    if cfg.solver_preset == "default":
        limits = replace(
            get_limits("default"),
            gap_tol=cfg.sdp_tol,
            eps_eq=cfg.eps_eq,
            eps_psd=cfg.eps_psd,
            max_iter=cfg.max_sdp_iter,
        )
    else:
        limits = get_limits(cfg.solver_preset)
    return SdpBackend(InteriorPointSolver(limits), cfg.solver_backend)


def draw_trial(
    cfg: ScenarioConfig,
    trial: int,
    fault_count: int,
    pattern: FaultPattern,
    geometry: Optional[ArrayGeometry] = None,
) -> TrialDraws:
    geometry = geometry or build_geometry(cfg)
    cloud = sample_test_points(cfg, substream(cfg.seed, trial, Substream.TESTPOINTS))
    channels = build_channel_set(cfg, geometry, cloud, substream(cfg.seed, trial, Substream.NLOS))
    indices = sample_fault_indices(
        pattern, fault_count, cfg.Nx, cfg.Ny,
        substream(cfg.seed, trial, Substream.FAULT_INDICES),
        pad=cfg.pad_structured,
    )
    # one state per element, so a given element keeps its state across fault counts
    all_states = sample_fault_states(cfg.N, substream(cfg.seed, trial, Substream.FAULT_STATES))
    fault = FaultRealization(indices=indices, states=all_states[indices])
    part = partition(channels, fault, cloud.ue_index)
    return TrialDraws(cloud=cloud, channels=channels, fault=fault, part=part)


def _result(outcome: OptimizerOutcome, part: PartitionedChannels, cfg: ScenarioConfig) -> MethodResult:
    return evaluate(
        outcome.config,
        part,
        cfg.P,
        cfg.noise_power,
        solver_iterations=outcome.solver_iterations,
        bisection_steps=outcome.bisection.iterations if outcome.bisection else 0,
        gap=outcome.gap,
        status=outcome.status,
        fallback=bool(outcome.report and outcome.report.fallback),
    )


def run_methods(
    cfg: ScenarioConfig,
    draws: TrialDraws,
    trial: int,
    methods: Sequence[Method],
    backend: Optional[SdpBackend] = None,
) -> tuple[Dict[Method, MethodResult], Dict[Method, str]]:
    """Run methods on shared draws; failures are collected, not raised."""
    backend = backend or make_backend(cfg)
    part = draws.part
    wanted = [Method(m) for m in methods]
    results: Dict[Method, MethodResult] = {}
    failures: Dict[Method, str] = {}

    def rng_for(method: Method) -> np.random.Generator:
        return substream(cfg.seed, trial, Substream.RANDOMIZATION, _METHOD_ORDER.index(method))

    def attempt(method: Method, fn):
        try:
            results[method] = fn()
        except (OptimizerServiceError, SolverError) as exc:
            failures[method] = exc.detail
            logger.warning("trial %d %s failed: %s", trial, method.value, exc.detail)

    if Method.BASELINE in wanted:
        def run_baseline():
            v = baseline(draws.channels.H_bar[part.ue_index]).v_R
            return evaluate(RisConfig(v_R=v[part.healthy_idx], method=Method.BASELINE), part, cfg.P, cfg.noise_power)
        attempt(Method.BASELINE, run_baseline)

    needs_gamma = Method.MAX_SLNR in wanted or Method.ROBUST in wanted
    if Method.NAIVE in wanted or (needs_gamma and cfg.gamma_mode == "per_trial"):
        attempt(Method.NAIVE, lambda: _result(
            naive_max_snr(part, backend, rng_for(Method.NAIVE), L=cfg.L,
                          fast_path=cfg.naive_fast_path),
            part, cfg,
        ))

    if needs_gamma:
        if cfg.gamma_mode == "constant":
            gamma = db_to_linear(cfg.gamma_snr_db) * cfg.noise_to_power
        elif Method.NAIVE in results:
            gamma = gamma_threshold(results[Method.NAIVE].snr, cfg.rho_gamma, cfg.noise_to_power)
        else:
            gamma = None
        for method, optimizer in ((Method.MAX_SLNR, max_slnr), (Method.ROBUST, robust_max_slnr)):
            if method not in wanted:
                continue
            if gamma is None:
                failures[method] = "SNR threshold unavailable: naive optimizer failed"
                continue
            attempt(method, lambda opt=optimizer, m=method: _result(
                opt(part, gamma, cfg.noise_to_power, backend, rng_for(m),
                    delta_bis=cfg.delta_bis, L=cfg.L, eps_gamma=cfg.eps_gamma,
                    max_iter=cfg.max_bisection_iter),
                part, cfg,
            ))

    # naive may have run only to set gamma
    if Method.NAIVE not in wanted:
        results.pop(Method.NAIVE, None)
        failures.pop(Method.NAIVE, None)
    return results, failures


def run_trial(job: TrialJob) -> TrialRecord:
    """Draw and evaluate one trial; the unit of work for the trial pool."""
    cfg = job.cfg
    try:
        draws = draw_trial(cfg, job.trial, job.fault_count, job.pattern)
    except (ChannelServiceError, FaultServiceError) as exc:
        record = TrialRecord(job.trial, job.key, job.fault_count, FaultPattern(job.pattern), checksum="")
        record.failures = {Method(m): exc.detail for m in job.methods}
        return record

    results, failures = run_methods(cfg, draws, job.trial, job.methods)
    record = TrialRecord(
        trial=job.trial,
        key=job.key,
        fault_count=job.fault_count,
        pattern=FaultPattern(job.pattern),
        checksum=draws.checksum(),
        results=results,
        failures=failures,
    )
    summary = " ".join(
        f"{m.value}[snr={10 * np.log10(max(r.snr, 1e-300)):.2f}dB "
        f"slnr={10 * np.log10(max(r.slnr, 1e-300)):.2f}dB it={r.solver_iterations} "
        f"bis={r.bisection_steps} fb={int(r.fallback)}]"
        for m, r in results.items()
    )
    logger.info(
        "trial=%d key=%s B=%d draws=%s %s%s",
        job.trial, job.key, job.fault_count, record.checksum, summary,
        f" failed={sorted(m.value for m in failures)}" if failures else "",
    )
    return record


def trial_jobs(
    cfg: ScenarioConfig,
    counts: Sequence[int],
    trials: int,
    pattern: FaultPattern,
    methods: Sequence[Method],
    keys: Optional[List[str]] = None,
) -> List[TrialJob]:
    keys = keys or [str(b) for b in counts]
    return [
        TrialJob(cfg=cfg, trial=t, fault_count=b, pattern=FaultPattern(pattern),
                 methods=tuple(Method(m) for m in methods), key=key)
        for b, key in zip(counts, keys)
        for t in range(trials)
    ]
