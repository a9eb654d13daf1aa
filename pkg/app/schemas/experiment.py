from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field

from worker.config import FaultPattern, Method


# ============================================================================
# Input Schemas
# ============================================================================

class SweepSpec(BaseModel):
    fault_counts: List[int] = [0, 5, 10, 15, 20, 25]
    methods: List[Method] = list(Method)
    trials: int = Field(50, ge=1)
    pattern: FaultPattern = FaultPattern.UNIFORM


class Command(BaseModel):
    subcommand: Literal["sweep", "heatmap", "patterns", "validate", "dump-config"]
    config_path: Optional[str] = None
    overrides: Dict[str, str] = {}
    output_dir: str = "results"
    seed: Optional[int] = None
    trials: Optional[int] = None
    jobs: int = Field(1, ge=1)
    method: Optional[Method] = None  # sweeps run every method when unset
    faulty: Optional[int] = None
    pattern: Optional[FaultPattern] = None
    grid: Optional[str] = None
    average: int = Field(1, ge=1)
    solver_preset: Optional[Literal["default", "strict", "fast"]] = None


# ============================================================================
# Output Schemas
# ============================================================================

class AggregateRecord(BaseModel):
    key: str  # fault count for sweeps, pattern slug for pattern studies
    fault_count: int
    pattern: FaultPattern
    method: Method
    mean_slnr_db: float
    std_slnr_db: float = Field(ge=0)
    mean_snr_db: float
    std_snr_db: float = Field(ge=0)
    trials: int = Field(ge=0)  # successful samples aggregated
    failures: int = Field(0, ge=0)
    mean_solver_iterations: float = 0.0
    mean_bisection_steps: float = 0.0
    fallback_rate: float = Field(0.0, ge=0, le=1)
    uncertified_rate: float = Field(0.0, ge=0, le=1)  # max_iter or numerical_error outcomes
