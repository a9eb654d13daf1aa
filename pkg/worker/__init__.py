"""
Numerical Engine

This package holds the compute side of the simulator, kept apart from the
scenario and experiment services in app/:

1. Solving lifted (semidefinite) programs over Hermitian PSD matrices
2. Deciding fixed-threshold feasibility for the bisection search
3. Running Monte Carlo trials across worker processes

Architecture:
    sdp             - Primal-dual interior-point solver, real embedding, text dump
    config          - Solver statuses, limits presets, strategy and pattern enums
    trial_worker    - Ordered process pool for trial jobs

Usage:
    from worker import SdpProblem, solve, SolverStatus

    solution = solve(SdpProblem(objective=C))

    if solution.status == SolverStatus.OPTIMAL:
        print(f"optimum {solution.objective:.4f} after {solution.iterations} iterations")
"""

# Solver
from .sdp import (
    InteriorPointSolver,
    LinearConstraint,
    SdpProblem,
    SdpSolution,
    FeasibilityResult,
    SolverError,
    solve,
    check_feasibility,
)

# Configuration
from .config import (
    SolverStatus,
    SolveMode,
    Method,
    FaultPattern,
    SolverLimits,
    DEFAULT_LIMITS,
    STRICT_LIMITS,
    FAST_LIMITS,
    get_limits,
    get_methods,
    get_patterns,
)

__all__ = [
    # Solver
    "InteriorPointSolver",
    "LinearConstraint",
    "SdpProblem",
    "SdpSolution",
    "FeasibilityResult",
    "SolverError",
    "solve",
    "check_feasibility",
    # Enums
    "SolverStatus",
    "SolveMode",
    "Method",
    "FaultPattern",
    # Configuration
    "SolverLimits",
    "DEFAULT_LIMITS",
    "STRICT_LIMITS",
    "FAST_LIMITS",
    # Helpers
    "get_limits",
    "get_methods",
    "get_patterns",
]
