"""
RIS configuration strategies.

- baseline: closed-form phase alignment on the full, fault-free model
- naive: semidefinite relaxation of max-SNR on the faulty model
- max_slnr: bisection over SLNR thresholds, each step a feasibility program
- robust: max_slnr on the Jensen bound, using fault indices only

Lifted programs are posed over X ~ [v_R; 1][v_R; 1]^H and solved by the
interior-point engine in worker.sdp; Gaussian randomization turns the relaxed
solution back into a unit-modulus configuration.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy import linalg

from app.services.fault_service import PartitionedChannels
from app.services.metrics_service import RisConfig, candidate_powers, signal_and_leakage
from worker.config import Method, SolveMode, SolverStatus
from worker.sdp import (
    FeasibilityResult,
    InteriorPointSolver,
    LinearConstraint,
    SdpProblem,
    SdpSolution,
    from_real_embedding,
    to_real_embedding,
)

logger = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]


class OptimizerServiceError(Exception):
    def __init__(self, *, detail: str, exit_code: int = 3) -> None:
        self.exit_code = exit_code
        self.detail = detail
        super().__init__(detail)


@dataclass
class BisectionState:
    """Bracket [low, high] on the SLNR threshold beta with its test history."""
    low: float
    high: float
    delta: float
    iterations: int = 0
    history: List[Tuple[float, bool]] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.high <= 0 or (self.high - self.low) / self.high < self.delta

    @property
    def width(self) -> float:
        """Relative bracket width (high - low) / high."""
        return (self.high - self.low) / self.high if self.high > 0 else 0.0

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.low + self.high)

    def record(self, beta: float, feasible: bool) -> None:
        self.history.append((beta, feasible))
        self.iterations += 1
        if feasible:
            self.low = max(self.low, beta)
        else:
            self.high = min(self.high, beta)


@dataclass
class RandomizationReport:
    samples: int
    feasible_count: int
    best_objective: float
    fallback: bool               # no candidate met the constraint
    principal_selected: bool = False


@dataclass
class OptimizerOutcome:
    config: RisConfig
    bisection: Optional[BisectionState] = None
    report: Optional[RandomizationReport] = None
    solver_iterations: int = 0
    gap: float = 0.0
    status: Optional[SolverStatus] = None


class SdpBackend:
    """Runs lifted programs natively or through the real embedding."""

    def __init__(self, solver: Optional[InteriorPointSolver] = None, backend: str = "native"):
        if backend not in ("native", "real_embedding"):
            raise OptimizerServiceError(detail=f"unknown solver backend {backend!r}", exit_code=2)
        self.solver = solver or InteriorPointSolver()
        self.backend = backend

    def solve(self, problem: SdpProblem, tol: Optional[float] = None) -> SdpSolution:
        if self.backend == "native":
            return self.solver.solve(problem, tol=tol)
        solution = self.solver.solve(to_real_embedding(problem), tol=tol)
        solution.X = from_real_embedding(solution.X)
        return solution

    def check_feasibility(self, problem: SdpProblem, tol: Optional[float] = None) -> FeasibilityResult:
        if self.backend == "native":
            return self.solver.check_feasibility(problem, tol=tol)
        result = self.solver.check_feasibility(to_real_embedding(problem), tol=tol)
        result.solution.X = from_real_embedding(result.solution.X)
        return result


# ============================================================================
# Closed forms
# ============================================================================

def _phases(vec: np.ndarray) -> np.ndarray:
    return np.exp(1j * np.angle(vec))


def baseline(H_bar_k: np.ndarray) -> RisConfig:
    """
    Phase of the principal left singular vector of H_k, over all N elements.

    Rotated so the first entry has zero phase.
    """
    U, s, _ = np.linalg.svd(H_bar_k, full_matrices=False)
    if s.size == 0 or s[0] <= 0:
        raise OptimizerServiceError(detail="baseline needs a non-zero UE channel")
    v = _phases(U[:, 0])
    v = v * np.conj(v[0])
    return RisConfig(v_R=v, method=Method.BASELINE)


def naive_closed_form(part: PartitionedChannels) -> RisConfig:
    """
    Analytic max-SNR configuration when H~_k is rank one.

    With g the principal direction of [H_R_k; h_B_k^H], every term of
    [v_R; 1]^H g is phase-aligned by v_R,n = exp(j(angle g_n - angle g_last)).
    """
    F = part.factors[part.ue_index]
    U, s, _ = np.linalg.svd(F, full_matrices=False)
    if s.size == 0 or s[0] <= 0:
        raise OptimizerServiceError(detail="naive optimizer needs a non-zero UE channel")
    g = U[:, 0]
    v = np.exp(1j * (np.angle(g[:-1]) - np.angle(g[-1])))
    return RisConfig(v_R=v, method=Method.NAIVE)


def gamma_threshold(snr_naive: float, rho_gamma: float, noise_to_power: float) -> float:
    """Signal-power threshold (snr_naive / rho_gamma) * sigma^2 / P."""
    if snr_naive < 0:
        raise OptimizerServiceError(detail="naive SNR must be non-negative", exit_code=2)
    if rho_gamma <= 1:
        raise OptimizerServiceError(detail="rho_gamma must exceed 1", exit_code=2)
    return snr_naive / rho_gamma * noise_to_power


# ============================================================================
# Gaussian randomization
# ============================================================================

def _project(samples: np.ndarray) -> np.ndarray:
    """Unit-modulus projection referenced to the last (appended) coordinate."""
    cand = _phases(samples)
    return cand * np.conj(cand[..., -1:])


def gaussian_randomization(
    V: np.ndarray,
    evaluate: Evaluator,
    L: int,
    rng: np.random.Generator,
    include_principal: bool = True,
) -> Tuple[np.ndarray, RandomizationReport]:
    """
    Draw L samples from CN(0, V), project each to unit modulus and keep the
    best one that the evaluator marks feasible.

    evaluate maps (K, n) candidates to (objective, feasible) arrays. The
    principal eigenvector of V is scored as one extra candidate. When no
    candidate is feasible, the best objective wins and fallback is set.
    """
    if L < 1:
        raise OptimizerServiceError(detail="randomization needs at least one sample", exit_code=2)
    V = 0.5 * (V + V.conj().T)
    n = V.shape[0]
    eigvals, eigvecs = linalg.eigh(V)
    root = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))

    raw = rng.standard_normal((L, n, 2))  # one call keeps shorter runs a prefix of longer ones
    z = (raw[..., 0] + 1j * raw[..., 1]) / np.sqrt(2.0)
    candidates = _project(z @ root.T)
    if include_principal:
        candidates = np.vstack([candidates, _project(eigvecs[:, -1])[None, :]])

    objective, feasible = evaluate(candidates)
    objective = np.asarray(objective, dtype=float)
    feasible = np.asarray(feasible, dtype=bool)
    fallback = not feasible.any()
    pool = np.flatnonzero(feasible) if not fallback else np.arange(len(objective))
    best = int(pool[np.argmax(objective[pool])])

    report = RandomizationReport(
        samples=L,
        feasible_count=int(np.count_nonzero(feasible[:L])),
        best_objective=float(objective[best]),
        fallback=fallback,
        principal_selected=include_principal and best == L,
    )
    return candidates[best], report


# ============================================================================
# Naive max-SNR
# ============================================================================

def naive_max_snr(
    part: PartitionedChannels,
    backend: SdpBackend,
    rng: np.random.Generator,
    L: int = 500,
    tol: Optional[float] = None,
    fast_path: bool = False,
) -> OptimizerOutcome:
    """max tr(H~_k X) s.t. diag(X) = 1, X PSD, then randomization on the UE power."""
    if fast_path:
        return OptimizerOutcome(config=naive_closed_form(part), status=SolverStatus.OPTIMAL)

    k = part.ue_index
    if not np.any(part.factors[k]):
        raise OptimizerServiceError(detail="naive optimizer needs a non-zero UE channel")
    solution = backend.solve(SdpProblem(objective=part.lifted[k]), tol=tol)
    if solution.status != SolverStatus.OPTIMAL:
        raise OptimizerServiceError(detail=f"max-SNR relaxation ended with status {solution.status.value}")

    factors_k = part.factors[k:k + 1]

    def signal_power(cands: np.ndarray):
        power = candidate_powers(cands, factors_k)[:, 0]
        return power, np.ones_like(power, dtype=bool)

    best, report = gaussian_randomization(solution.X, signal_power, L, rng)
    return OptimizerOutcome(
        config=RisConfig(v_R=best[:-1], method=Method.NAIVE),
        report=report,
        solver_iterations=solution.iterations,
        gap=solution.gap,
        status=solution.status,
    )


# ============================================================================
# Max-SLNR by bisection
# ============================================================================

def slnr_feasibility_problem(
    lifted: np.ndarray,
    ue_index: int,
    beta: float,
    gamma: float,
    noise_to_power: float,
    offsets: Optional[np.ndarray] = None,
) -> SdpProblem:
    """
    Slack program for a fixed threshold beta:

        tr(H~_k X) + o_k - beta (sum_{t != k} tr(H~_t X) + o_t + sigma^2/P) >= s
        tr(H~_k X) - gamma >= s

    with o_t the fault offsets (zero under perfect state knowledge). The
    offsets enter the SLNR constraint only; gamma bounds the power steered by
    the working elements.
    """
    k = ue_index
    if offsets is None:
        offsets = np.zeros(lifted.shape[0])
    others = np.delete(np.arange(lifted.shape[0]), k)
    leak_matrix = lifted[others].sum(axis=0)
    leak_offset = float(offsets[others].sum())
    signal_constraint = LinearConstraint(
        matrix=lifted[k] - beta * leak_matrix,
        bound=beta * (noise_to_power + leak_offset) - offsets[k],
    )
    gamma_constraint = LinearConstraint(matrix=lifted[k], bound=gamma)
    return SdpProblem(
        objective=np.zeros_like(lifted[k]),
        constraints=[signal_constraint, gamma_constraint],
        mode=SolveMode.MAXIMIZE_SLACK,
    )


def slnr_upper_bound(lifted_k: np.ndarray, noise_to_power: float, offset_k: float = 0.0) -> float:
    """Leakage-free SLNR bound ((n+1) lambda_max(H~_k) + o_k) / (sigma^2/P)."""
    lam = float(linalg.eigvalsh(lifted_k)[-1])
    return (lifted_k.shape[0] * max(lam, 0.0) + offset_k) / noise_to_power


def _bisect(
    part: PartitionedChannels,
    offsets: np.ndarray,
    gamma: float,
    noise_to_power: float,
    backend: SdpBackend,
    delta_bis: float,
    max_iter: int,
    tol: Optional[float],
) -> Tuple[BisectionState, np.ndarray, int, SolverStatus]:
    k = part.ue_index
    lifted = part.lifted

    start = backend.check_feasibility(
        slnr_feasibility_problem(lifted, k, 0.0, gamma, noise_to_power, offsets), tol=tol
    )
    iterations = start.solution.iterations
    statuses = [start.solution.status]
    if not start.feasible:
        raise OptimizerServiceError(
            detail=f"SNR threshold gamma={gamma:.3e} is not achievable (slack {start.slack:.3e})"
        )

    high = slnr_upper_bound(lifted[k], noise_to_power, float(offsets[k]))
    if high <= 0:
        raise OptimizerServiceError(detail="UE channel is zero; SLNR is identically zero")
    state = BisectionState(low=0.0, high=high, delta=delta_bis)
    best_X = start.solution.X

    while not state.converged and state.iterations < max_iter:
        beta = state.midpoint
        verdict = backend.check_feasibility(
            slnr_feasibility_problem(lifted, k, beta, gamma, noise_to_power, offsets), tol=tol
        )
        iterations += verdict.solution.iterations
        statuses.append(verdict.solution.status)
        state.record(beta, verdict.feasible)
        if verdict.feasible:
            best_X = verdict.solution.X
        logger.debug(
            "bisection step %d: beta=%.4e feasible=%s slack=%.3e",
            state.iterations, beta, verdict.feasible, verdict.slack,
        )
    if not state.converged:
        logger.warning("bisection stopped after %d steps with bracket [%.4e, %.4e]",
                       state.iterations, state.low, state.high)
    return state, best_X, iterations, _bisection_status(state, statuses)


def _bisection_status(state: BisectionState, statuses: List[SolverStatus]) -> SolverStatus:
    """Worst inner outcome; an unfinished bracket counts as max_iter."""
    if SolverStatus.NUMERICAL_ERROR in statuses:
        return SolverStatus.NUMERICAL_ERROR
    if SolverStatus.MAX_ITER in statuses or not state.converged:
        return SolverStatus.MAX_ITER
    return SolverStatus.OPTIMAL


def _slnr_evaluator(
    factors: np.ndarray,
    offsets: np.ndarray,
    ue_index: int,
    gamma: float,
    noise_to_power: float,
    eps_gamma: float,
) -> Evaluator:
    def evaluate(cands: np.ndarray):
        raw = candidate_powers(cands, factors)
        signal, leak = signal_and_leakage(raw + offsets, ue_index)
        return signal / (leak + noise_to_power), raw[:, ue_index] >= gamma * (1.0 - eps_gamma)
    return evaluate


def max_slnr(
    part: PartitionedChannels,
    gamma: float,
    noise_to_power: float,
    backend: SdpBackend,
    rng: np.random.Generator,
    delta_bis: float = 1e-3,
    L: int = 500,
    eps_gamma: float = 0.02,
    max_iter: int = 60,
    tol: Optional[float] = None,
) -> OptimizerOutcome:
    """
    Maximize the realized SLNR subject to the UE signal power staying above gamma.

    Bisection keeps the relaxed solution of the last feasible threshold;
    randomization then ranks candidates by their exact SLNR.
    """
    if not part.states_known:
        raise OptimizerServiceError(detail="max_slnr needs the fault states; use robust_max_slnr", exit_code=2)
    zeros = np.zeros(part.T)
    state, X, iterations, status = _bisect(part, zeros, gamma, noise_to_power, backend, delta_bis, max_iter, tol)
    evaluate = _slnr_evaluator(part.factors, zeros, part.ue_index, gamma, noise_to_power, eps_gamma)
    best, report = gaussian_randomization(X, evaluate, L, rng)
    if report.fallback:
        logger.warning("max_slnr: no randomization sample met gamma; keeping best-SLNR sample")
    return OptimizerOutcome(
        config=RisConfig(v_R=best[:-1], method=Method.MAX_SLNR),
        bisection=state,
        report=report,
        solver_iterations=iterations,
        gap=state.width,
        status=status,
    )


def robust_max_slnr(
    part: PartitionedChannels,
    gamma: float,
    noise_to_power: float,
    backend: SdpBackend,
    rng: np.random.Generator,
    delta_bis: float = 1e-3,
    L: int = 500,
    eps_gamma: float = 0.02,
    max_iter: int = 60,
    tol: Optional[float] = None,
) -> OptimizerOutcome:
    """
    max_slnr on the expected-SLNR lower bound.

    Fault states are never read: the fixed faulty row is dropped and the
    Frobenius offsets ||H_B_t||_F^2 / 3 stand in for it in the SLNR. The SNR
    threshold applies to the working elements alone.
    """
    blind = part.without_states()
    state, X, iterations, status = _bisect(
        blind, blind.offsets, gamma, noise_to_power, backend, delta_bis, max_iter, tol
    )
    evaluate = _slnr_evaluator(blind.factors, blind.offsets, blind.ue_index, gamma, noise_to_power, eps_gamma)
    best, report = gaussian_randomization(X, evaluate, L, rng)
    if report.fallback:
        logger.warning("robust: no randomization sample met gamma; keeping best-bound sample")
    return OptimizerOutcome(
        config=RisConfig(v_R=best[:-1], method=Method.ROBUST),
        bisection=state,
        report=report,
        solver_iterations=iterations,
        gap=state.width,
        status=status,
    )
