"""
Fast invariant suite run by `validate`.

Each check builds a small seeded instance, exercises one identity or solver
property and reports pass/fail with a short measurement.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from app.schemas.scenario import ScenarioConfig
from app.services.channel_service import ap_ris_channel, build_geometry, steering_vector
from app.services.fault_service import FaultRealization, partition, sample_fault_states
from app.services.metrics_service import (
    evaluate,
    expected_slnr_lower_bound,
    lifted_powers,
    point_powers,
    slnr,
)
from app.services.optimizer_service import (
    gamma_threshold,
    max_slnr,
    naive_closed_form,
    slnr_feasibility_problem,
)
from app.services.trial_service import draw_trial, make_backend
from worker.config import FaultPattern
from worker.sdp import SdpProblem, from_real_embedding, solve, to_real_embedding

logger = logging.getLogger(__name__)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def small_config(seed: int = 0, **overrides) -> ScenarioConfig:
    """A 3x2 RIS, 2-antenna AP and 3 test points: seconds-scale instances."""
    values = dict(Nx=3, Ny=2, M=2, T=3, L=64, trials=1, seed=seed, fault_counts=(0, 2))
    values.update(overrides)
    return ScenarioConfig(**values)


def check_steering() -> CheckResult:
    lam = 1.0
    line = np.array([[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [1.0, 0.0, 0.0], [1.5, 0.0, 0.0]])
    got = steering_vector(line, np.array([0.5, np.sqrt(0.75), 0.0]), lam)
    err = float(np.max(np.abs(got - np.array([1, 1j, -1, -1j]))))
    cfg = ScenarioConfig()
    geometry = build_geometry(cfg)
    b = steering_vector(geometry.ris_positions, np.array([0.3, -0.8, 0.2]), cfg.wavelength)
    modulus = float(np.max(np.abs(np.abs(b) - 1.0)))
    return CheckResult("steering", err < 1e-12 and modulus < 1e-12, f"ula_err={err:.1e} modulus_err={modulus:.1e}")


def check_rank_one() -> CheckResult:
    cfg = small_config()
    G = ap_ris_channel(cfg, build_geometry(cfg))
    draws = draw_trial(cfg, 0, 0, FaultPattern.UNIFORM)
    ratios = []
    for mat in [G, *draws.channels.H_bar]:
        s = np.linalg.svd(mat, compute_uv=False)
        ratios.append(s[1] / s[0] if len(s) > 1 else 0.0)
    worst = float(max(ratios))
    return CheckResult("rank_one", worst < 1e-10, f"max sigma2/sigma1={worst:.1e}")


def check_lifting_identity(instances: int = 20) -> CheckResult:
    rng = np.random.default_rng(1)
    worst = 0.0
    for i in range(instances):
        draws = draw_trial(small_config(seed=i), 0, 2, FaultPattern.UNIFORM)
        part = draws.part
        v = np.exp(1j * rng.uniform(0, 2 * np.pi, part.n_bar))
        lifted = np.append(v, 1.0)
        direct = point_powers(v, part)
        via_trace = lifted_powers(np.outer(lifted, lifted.conj()), part)
        worst = max(worst, float(np.max(np.abs(via_trace - direct) / np.maximum(direct, 1e-300))))
    return CheckResult("lifting_identity", worst <= 1e-9, f"max rel err={worst:.1e}")


def check_fault_moments(draws: int = 100_000) -> CheckResult:
    states = sample_fault_states(draws, np.random.default_rng(2))
    mean_state = float(abs(states.mean()))
    mean_sq = float(np.mean(np.abs(states) ** 2))
    ok = mean_state <= 0.01 and abs(mean_sq - 1.0 / 3.0) <= 0.01
    return CheckResult("fault_moments", ok, f"|E v_B|={mean_state:.4f} E delta^2={mean_sq:.4f}")


def check_jensen_bound(redraws: int = 20_000) -> CheckResult:
    rng = np.random.default_rng(3)
    cfg = small_config(seed=3)
    draws = draw_trial(cfg, 0, 2, FaultPattern.UNIFORM)
    v = np.exp(1j * rng.uniform(0, 2 * np.pi, draws.part.n_bar))
    bound = expected_slnr_lower_bound(v, draws.part, cfg.noise_power, cfg.P)
    realized = []
    for _ in range(redraws):
        fault = FaultRealization(draws.fault.indices, sample_fault_states(draws.fault.B, rng))
        realized.append(slnr(v, partition(draws.channels, fault, draws.cloud.ue_index), cfg.noise_power, cfg.P))
    mean = float(np.mean(realized))
    return CheckResult("jensen_bound", mean >= 0.99 * bound, f"mean={mean:.4e} bound={bound:.4e}")


def check_sdp_examples() -> CheckResult:
    first = solve(SdpProblem(objective=np.array([[0.0, 1.0], [1.0, 0.0]])))
    c = np.array([1.0, 0.5j, -0.25 + 0.25j])
    second = solve(SdpProblem(objective=np.outer(c, c.conj())))
    target = float(np.sum(np.abs(c)) ** 2)
    err1 = abs(first.objective - 2.0)
    err2 = abs(second.objective - target) / target
    ok = first.certified and second.certified and err1 < 1e-5 and err2 < 1e-5
    return CheckResult("sdp_examples", ok, f"maxcut2 err={err1:.1e} phase_align rel err={err2:.1e}")


def check_real_embedding() -> CheckResult:
    rng = np.random.default_rng(4)
    A = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    problem = SdpProblem(objective=A @ A.conj().T)
    native = solve(problem)
    embedded = solve(to_real_embedding(problem))
    X = from_real_embedding(embedded.X)
    value = float(np.real(np.trace(problem.objective @ X)))
    err = abs(value - native.objective) / max(1.0, abs(native.objective))
    return CheckResult("real_embedding", err < 1e-4, f"rel err={err:.1e}")


def check_bisection_bracket(seed: int = 5) -> CheckResult:
    cfg = small_config(seed=seed)
    draws = draw_trial(cfg, 0, 2, FaultPattern.UNIFORM)
    part = draws.part
    backend = make_backend(cfg)
    snr_naive = evaluate(naive_closed_form(part), part, cfg.P, cfg.noise_power).snr
    gamma = gamma_threshold(snr_naive, cfg.rho_gamma, cfg.noise_to_power)
    outcome = max_slnr(part, gamma, cfg.noise_to_power, backend, np.random.default_rng(seed), L=cfg.L)
    state = outcome.bisection
    low = backend.check_feasibility(
        slnr_feasibility_problem(part.lifted, part.ue_index, state.low, gamma, cfg.noise_to_power)
    )
    above = state.high * (1.0 + 2.0 * state.delta)
    high = backend.check_feasibility(
        slnr_feasibility_problem(part.lifted, part.ue_index, above, gamma, cfg.noise_to_power)
    )
    ok = low.feasible and not high.feasible
    return CheckResult("bisection_bracket", ok, f"l={state.low:.4e} h={state.high:.4e} steps={state.iterations}")


CHECKS: List[Callable[[], CheckResult]] = [
    check_steering,
    check_rank_one,
    check_lifting_identity,
    check_fault_moments,
    check_jensen_bound,
    check_sdp_examples,
    check_real_embedding,
    check_bisection_bracket,
]


def run_checks() -> List[CheckResult]:
    results = []
    for check in CHECKS:
        try:
            result = check()
        except Exception as exc:  # a crashing check is a failed check
            result = CheckResult(check.__name__.removeprefix("check_"), False, f"error: {exc}")
        logger.info("validate %s: %s (%s)", result.name, "pass" if result.passed else "FAIL", result.detail)
        results.append(result)
    return results
