"""
Configuration for the numerical engine.

This module centralizes the knobs of the lifted-program solver and the
string enums shared by the optimizers and the experiment harness:
- Solver statuses and tolerances (PSD, equality, duality gap)
- RIS configuration strategies and fault patterns
- Preset limits for different contexts (default, strict, fast)

Keeping them apart from the solver itself makes it easy to:
- Tighten tolerances for certification runs without touching the algorithm
- Loosen them for quick desk-scale sweeps
"""

from dataclasses import dataclass
from enum import Enum
from typing import List


class SolverStatus(str, Enum):
    """Possible outcomes of a lifted-program solve."""
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"          # slack certified >= 0 before optimality (feasibility mode)
    INFEASIBLE = "infeasible"
    MAX_ITER = "max_iter"
    NUMERICAL_ERROR = "numerical_error"


class SolveMode(str, Enum):
    """
    MAXIMIZE_OBJECTIVE: maximize tr(C X) over the constraint set.

    MAXIMIZE_SLACK: maximize s subject to tr(A_i X) - b_i >= s. Used to decide
                    feasibility of a fixed-threshold problem by the sign of s.
    """
    MAXIMIZE_OBJECTIVE = "maximize_objective"
    MAXIMIZE_SLACK = "maximize_slack"


class Method(str, Enum):
    """RIS phase-configuration strategies."""
    BASELINE = "baseline"
    NAIVE = "naive"
    MAX_SLNR = "max_slnr"
    ROBUST = "robust"


class FaultPattern(str, Enum):
    """Spatial layout of failed elements on the RIS grid."""
    UNIFORM = "uniform"
    QUADRANT = "quadrant"
    TOP_ROWS = "top_rows"
    LEFT_COLUMNS = "left_columns"


@dataclass(frozen=True)
class SolverLimits:
    """
    Tolerances and caps for the interior-point solver.

    gap_tol bounds the duality gap relative to (1 + |objective|); eps_eq bounds
    the equality residuals (unit diagonal); eps_psd bounds the most negative
    eigenvalue of X relative to tr(X).
    """
    gap_tol: float = 1e-6
    eps_eq: float = 1e-7
    eps_psd: float = 1e-7
    max_iter: int = 100
    step_fraction: float = 0.98         # fraction of the distance to the cone boundary
    early_exit: bool = True             # stop feasibility solves once the slack sign is certified


# PRESET LIMITS FOR DIFFERENT CONTEXTS

DEFAULT_LIMITS = SolverLimits()

STRICT_LIMITS = SolverLimits(
    gap_tol=1e-8,
    eps_eq=1e-9,
    eps_psd=1e-9,
    max_iter=200,
    early_exit=False,
)

FAST_LIMITS = SolverLimits(
    gap_tol=1e-5,
    eps_eq=1e-6,
    eps_psd=1e-6,
    max_iter=60,
)


# HELPER FUNCTIONS

def get_limits(context: str = "default") -> SolverLimits:
    """Get solver limits for a given context (default, strict, fast)."""
    limits_map = {
        "default": DEFAULT_LIMITS,
        "strict": STRICT_LIMITS,
        "fast": FAST_LIMITS,
    }
    if context not in limits_map:
        raise ValueError(f"unknown solver preset {context!r}; expected one of {sorted(limits_map)}")
    return limits_map[context]


def get_methods() -> List[str]:
    """Get list of all strategy slugs, in evaluation order."""
    return [m.value for m in Method]


def get_patterns() -> List[str]:
    """Get list of all fault pattern slugs."""
    return [p.value for p in FaultPattern]
