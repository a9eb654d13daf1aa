"""
Link metrics for a candidate RIS configuration.

All quantities are linear. Signal "power" at point t means the pre-noise
scale ||v_R^H H_R_t + h_B_t^H||^2; multiply by P/sigma^2 for an SNR. With the
MRT precoder this norm form equals the delivered power per watt, so no
precoder is formed except for the power map.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from app.schemas.scenario import GridSpec, ScenarioConfig
from app.services.channel_service import ArrayGeometry, rician_channel
from app.services.fault_service import PartitionedChannels
from worker.config import Method, SolverStatus

_UNIT_TOL = 1e-9


@dataclass(frozen=True)
class RisConfig:
    """Unit-modulus configuration of the controllable elements and its origin."""
    v_R: np.ndarray
    method: Method

    def __post_init__(self) -> None:
        v = np.asarray(self.v_R, dtype=np.complex128)
        if v.ndim != 1 or np.any(np.abs(np.abs(v) - 1.0) > _UNIT_TOL):
            raise ValueError("RIS configuration entries must have unit modulus")
        object.__setattr__(self, "v_R", v)
        object.__setattr__(self, "method", Method(self.method))


@dataclass
class MethodResult:
    config: RisConfig
    snr: float
    slnr: float
    leakage: float
    signal: float                   # pre-noise signal power at the UE
    solver_iterations: int = 0
    bisection_steps: int = 0
    gap: float = 0.0
    status: Optional[SolverStatus] = None
    fallback: bool = False
    extras: dict = field(default_factory=dict)


# ============================================================================
# Evaluation on the partitioned channels
# ============================================================================

def received_rows(v_R: np.ndarray, part: PartitionedChannels) -> np.ndarray:
    """(T, M) effective rows v_R^H H_R_t + h_B_t^H."""
    return np.einsum("n,tnm->tm", np.conj(v_R), part.H_R) + part.fixed_rows


def point_powers(v_R: np.ndarray, part: PartitionedChannels) -> np.ndarray:
    rows = received_rows(v_R, part)
    return np.sum(np.abs(rows) ** 2, axis=1)


def candidate_powers(candidates: np.ndarray, factors: np.ndarray) -> np.ndarray:
    """
    Powers of lifted candidates [v_R; 1] at every point, shape (K, T).

    Equivalent to Re [v_R; 1]^H H~_t [v_R; 1] without forming H~_t.
    """
    rows = np.einsum("kn,tnm->ktm", np.conj(candidates), factors)
    return np.sum(np.abs(rows) ** 2, axis=2)


def lifted_powers(V: np.ndarray, part: PartitionedChannels) -> np.ndarray:
    """Re tr(H~_t V) for every t."""
    return np.real(np.einsum("tij,ji->t", part.lifted, V))


def signal_and_leakage(powers: np.ndarray, ue_index: int) -> tuple:
    """Split per-point powers (..., T) into signal and leakage sums."""
    signal = powers[..., ue_index]
    leak = np.sum(powers, axis=-1) - signal
    return signal, leak


def snr(v_R: np.ndarray, part: PartitionedChannels, P: float, noise_power: float) -> float:
    return float(P * point_powers(v_R, part)[part.ue_index] / noise_power)


def leakage(v_R: np.ndarray, part: PartitionedChannels) -> float:
    powers = point_powers(v_R, part)
    return float(np.sum(powers[part.leakage_indices]))


def slnr(v_R: np.ndarray, part: PartitionedChannels, noise_power: float, P: float) -> float:
    """signal / (leakage + sigma^2 / P)."""
    signal, leak = signal_and_leakage(point_powers(v_R, part), part.ue_index)
    return float(signal / (leak + noise_power / P))


def expected_slnr_lower_bound(v_R: np.ndarray, part: PartitionedChannels, noise_power: float, P: float) -> float:
    """
    Jensen lower bound on the expected SLNR over random fault states.

    Only the fault indices enter (through H_R and the Frobenius offsets).
    """
    healthy = np.einsum("n,tnm->tm", np.conj(v_R), part.H_R)
    powers = np.sum(np.abs(healthy) ** 2, axis=1) + part.offsets
    signal, leak = signal_and_leakage(powers, part.ue_index)
    return float(signal / (leak + noise_power / P))


def evaluate(
    config: RisConfig,
    part: PartitionedChannels,
    P: float,
    noise_power: float,
    **diagnostics,
) -> MethodResult:
    """Score a configuration on the true (state-aware) channels."""
    powers = point_powers(config.v_R, part)
    signal, leak = signal_and_leakage(powers, part.ue_index)
    return MethodResult(
        config=config,
        snr=float(P * signal / noise_power),
        slnr=float(signal / (leak + noise_power / P)),
        leakage=float(leak),
        signal=float(signal),
        **diagnostics,
    )


# ============================================================================
# Power maps
# ============================================================================

def watts_to_dbm(power_w):
    return 10.0 * np.log10(np.asarray(power_w) * 1000.0)


def to_db(value):
    return 10.0 * np.log10(np.asarray(value))


def mrt_precoder(v_full: np.ndarray, H_bar_ue: np.ndarray, P: float) -> np.ndarray:
    """w = sqrt(P) (v^H H_k)^H / ||v^H H_k||."""
    row = np.conj(v_full) @ H_bar_ue
    norm = np.linalg.norm(row)
    if norm == 0:
        return np.zeros_like(row)
    return np.sqrt(P) * row.conj() / norm


@dataclass(frozen=True)
class PowerMap:
    x: np.ndarray          # (nx,) cell centers
    y: np.ndarray          # (ny,) cell centers
    power_w: np.ndarray    # (ny, nx)
    anchor: tuple          # (iy, ix) of the cell holding the UE


def grid_centers(cfg: ScenarioConfig, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    ue = np.asarray(cfg.p_UE, dtype=float)
    dx = cfg.area_x / grid.nx
    dy = cfg.area_y / grid.ny
    x = ue[0] - 0.5 * cfg.area_x + dx * (np.arange(grid.nx) + 0.5)
    y = ue[1] - 0.5 * cfg.area_y + dy * (np.arange(grid.ny) + 0.5)
    return x, y


def received_power_map(
    v_full: np.ndarray,
    cfg: ScenarioConfig,
    geometry: ArrayGeometry,
    G: np.ndarray,
    h_ue: np.ndarray,
    grid: GridSpec,
    rng: np.random.Generator,
) -> PowerMap:
    """
    Power delivered per cell by the MRT precoder aimed at the UE, in watts.

    Each cell center gets fresh Rician draws (averaged over grid.average
    redraws); the cell containing p_UE uses the UE's own channel so it agrees
    with the trial metrics.
    """
    H_ue = np.conj(h_ue)[:, None] * G
    w = mrt_precoder(v_full, H_ue, cfg.P)
    x, y = grid_centers(cfg, grid)
    # the area is centered on the UE, so it sits in the middle cell (upper one on ties)
    ax = min(grid.nx // 2, grid.nx - 1)
    ay = min(grid.ny // 2, grid.ny - 1)
    gain = G @ w  # (N,)

    power = np.zeros((grid.ny, grid.nx))
    for iy, yc in enumerate(y):
        for ix, xc in enumerate(x):
            if (iy, ix) == (ay, ax):
                power[iy, ix] = abs(np.sum(np.conj(v_full) * np.conj(h_ue) * gain)) ** 2
                continue
            point = np.array([xc, yc, 0.0])
            acc = 0.0
            for _ in range(grid.average):
                h = rician_channel(cfg, geometry, point, rng)
                acc += abs(np.sum(np.conj(v_full) * np.conj(h) * gain)) ** 2
            power[iy, ix] = acc / grid.average
    return PowerMap(x=x, y=y, power_w=power, anchor=(ay, ax))
