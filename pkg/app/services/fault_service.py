"""
Element failures: which RIS elements fail, what they reflect, and how the
channels split into a controllable part and a fixed part.

Grid convention: element (ix, iy) has flat index iy*Nx + ix; "upper" means the
largest iy, "left" the smallest ix.
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from app.services.channel_service import ChannelSet
from worker.config import FaultPattern

logger = logging.getLogger(__name__)

_STATE_TOL = 1e-12


class FaultServiceError(Exception):
    def __init__(self, *, detail: str, exit_code: int = 2) -> None:
        self.exit_code = exit_code
        self.detail = detail
        super().__init__(detail)


@dataclass(frozen=True)
class FaultRealization:
    """
    Failed element indices (sorted) and their reflection states v_B.

    states is None when the states are withheld (partial CSI).
    """
    indices: np.ndarray
    states: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        indices = np.asarray(self.indices, dtype=int)
        if len(np.unique(indices)) != len(indices):
            raise FaultServiceError(detail="fault indices must be distinct")
        order = np.argsort(indices)
        object.__setattr__(self, "indices", indices[order])
        if self.states is not None:
            states = np.asarray(self.states, dtype=np.complex128)
            if states.shape != indices.shape:
                raise FaultServiceError(
                    detail=f"got {states.shape[0]} fault states for {indices.shape[0]} indices"
                )
            if np.any(np.abs(states) > 1.0 + _STATE_TOL):
                raise FaultServiceError(detail="fault states must have modulus at most 1")
            object.__setattr__(self, "states", states[order])

    @property
    def B(self) -> int:
        return int(self.indices.shape[0])

    @property
    def states_known(self) -> bool:
        return self.states is not None

    def withhold_states(self) -> "FaultRealization":
        return replace(self, states=None)


def fault_mask(indices: np.ndarray, Nx: int, Ny: int) -> np.ndarray:
    """0/1 grid indexed [iy, ix]."""
    mask = np.zeros(Nx * Ny, dtype=int)
    mask[np.asarray(indices, dtype=int)] = 1
    return mask.reshape(Ny, Nx)


# ============================================================================
# Fault selection
# ============================================================================

def _quadrant(Nx: int, Ny: int) -> np.ndarray:
    return np.array(
        [iy * Nx + ix for iy in range(Ny) for ix in range(Nx) if ix < Nx / 2 and iy >= Ny / 2],
        dtype=int,
    )


def _top_rows(Nx: int, Ny: int, extra: int) -> np.ndarray:
    rows = [iy * Nx + ix for iy in (Ny - 1, Ny - 2) for ix in range(Nx)]
    pad = [(Ny - 3) * Nx + ix for ix in range(extra)]
    return np.array(rows + pad, dtype=int)


def _left_columns(Nx: int, Ny: int, extra: int) -> np.ndarray:
    cols = [iy * Nx + ix for ix in (0, 1) for iy in range(Ny)]
    pad = [iy * Nx + 2 for iy in range(Ny - 1, Ny - 1 - extra, -1)]
    return np.array(cols + pad, dtype=int)


def pattern_size(pattern: FaultPattern, Nx: int, Ny: int) -> int:
    """Element count of a structured pattern before padding."""
    pattern = FaultPattern(pattern)
    if pattern == FaultPattern.QUADRANT:
        return len(_quadrant(Nx, Ny))
    if pattern == FaultPattern.TOP_ROWS:
        return 2 * Nx
    if pattern == FaultPattern.LEFT_COLUMNS:
        return 2 * Ny
    raise FaultServiceError(detail="uniform faults have no fixed size")


def pattern_fault_count(
    pattern: FaultPattern, Nx: int, Ny: int, fraction: float = 0.25, pad: bool = True
) -> int:
    """
    B used by the pattern study: round(fraction * N), except that rows and
    columns keep their exact element count when padding is off.
    """
    target = int(round(fraction * Nx * Ny))
    pattern = FaultPattern(pattern)
    if pattern in (FaultPattern.TOP_ROWS, FaultPattern.LEFT_COLUMNS) and not pad:
        return pattern_size(pattern, Nx, Ny)
    return target


def sample_fault_indices(
    pattern: FaultPattern,
    B: int,
    Nx: int,
    Ny: int,
    rng: np.random.Generator,
    pad: bool = True,
) -> np.ndarray:
    """
    Failed element indices for a pattern.

    uniform draws a random permutation of all N elements and keeps the first B,
    so fault sets from one stream are nested across B. Structured patterns are
    deterministic; rows are padded from the leftmost elements of the next row
    down and columns from the top of the next column, when pad allows it.
    """
    pattern = FaultPattern(pattern)
    N = Nx * Ny
    if B < 0 or B > N:
        raise FaultServiceError(detail=f"fault count {B} outside [0, {N}]")
    if pattern == FaultPattern.UNIFORM:
        return np.sort(rng.permutation(N)[:B])
    if B == 0:
        return np.empty(0, dtype=int)

    size = pattern_size(pattern, Nx, Ny)
    if pattern == FaultPattern.QUADRANT:
        if B != size:
            raise FaultServiceError(detail=f"quadrant pattern needs B={size}, got {B}")
        return _quadrant(Nx, Ny)

    extra = B - size
    if extra == 0:
        extra_ok = True
    elif pattern == FaultPattern.TOP_ROWS:
        extra_ok = pad and 0 < extra <= Nx and Ny >= 3
    else:
        extra_ok = pad and 0 < extra <= Ny and Nx >= 3
    if not extra_ok:
        raise FaultServiceError(
            detail=f"{pattern.value} pattern covers {size} elements; B={B} is not reachable"
            + ("" if pad else " without padding")
        )
    if pattern == FaultPattern.TOP_ROWS:
        return np.sort(_top_rows(Nx, Ny, extra))
    return np.sort(_left_columns(Nx, Ny, extra))


def sample_fault_states(B: int, rng: np.random.Generator) -> np.ndarray:
    """v_B = delta e^{j phi}, delta ~ U[0, 1], phi ~ U[0, 2 pi)."""
    if B < 0:
        raise FaultServiceError(detail=f"fault count must be non-negative, got {B}")
    delta = rng.uniform(0.0, 1.0, size=B)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=B)
    return delta * np.exp(1j * phi)


# ============================================================================
# Partition and lifting
# ============================================================================

@dataclass(frozen=True)
class PartitionedChannels:
    """
    Channels split by fault membership for every test point t.

    factors[t] = [H_R_t; h_B_t^H] stacks the healthy rows and the fixed
    faulty contribution; lifted[t] = factors[t] factors[t]^H.
    """
    healthy_idx: np.ndarray
    faulty_idx: np.ndarray
    H_R: np.ndarray         # (T, N_bar, M)
    H_B: np.ndarray         # (T, B, M)
    fixed_rows: np.ndarray  # (T, M), v_B^H H_B_t; zero when states are withheld
    factors: np.ndarray     # (T, N_bar + 1, M)
    lifted: np.ndarray      # (T, N_bar + 1, N_bar + 1)
    offsets: np.ndarray     # (T,), ||H_B_t||_F^2 / 3
    ue_index: int
    states_known: bool

    @property
    def n_bar(self) -> int:
        return self.H_R.shape[1]

    @property
    def T(self) -> int:
        return self.H_R.shape[0]

    @property
    def N(self) -> int:
        return self.H_R.shape[1] + self.H_B.shape[1]

    @property
    def leakage_indices(self) -> np.ndarray:
        return np.array([t for t in range(self.T) if t != self.ue_index], dtype=int)

    def reassemble(self) -> np.ndarray:
        """Interleave healthy and faulty rows back into H_bar (T, N, M)."""
        full = np.empty((self.T, self.N, self.H_R.shape[2]), dtype=np.complex128)
        full[:, self.healthy_idx, :] = self.H_R
        full[:, self.faulty_idx, :] = self.H_B
        return full

    def without_states(self) -> "PartitionedChannels":
        """Same split with the fixed faulty row zeroed (indices-only knowledge)."""
        fixed = np.zeros_like(self.fixed_rows)
        factors, lifted = _lift(self.H_R, fixed)
        return replace(self, fixed_rows=fixed, factors=factors, lifted=lifted, states_known=False)


def _lift(H_R: np.ndarray, fixed_rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    factors = np.concatenate([H_R, fixed_rows[:, None, :]], axis=1)
    lifted = factors @ factors.conj().transpose(0, 2, 1)
    lifted = 0.5 * (lifted + lifted.conj().transpose(0, 2, 1))
    return factors, lifted


def fault_offsets(H_B: np.ndarray) -> np.ndarray:
    """E ||v_B^H H_B_t||^2 = ||H_B_t||_F^2 / 3 for i.i.d. states with E[delta^2] = 1/3."""
    return np.sum(np.abs(H_B) ** 2, axis=(1, 2)) / 3.0


def partition(channels: ChannelSet, fault: FaultRealization, ue_index: int = 0) -> PartitionedChannels:
    N = channels.N
    indices = fault.indices
    if indices.size and (indices.min() < 0 or indices.max() >= N):
        raise FaultServiceError(detail=f"fault index out of range for N={N}")
    if not 0 <= ue_index < channels.H_bar.shape[0]:
        raise FaultServiceError(detail=f"ue_index {ue_index} outside the channel set")

    faulty = np.zeros(N, dtype=bool)
    faulty[indices] = True
    healthy_idx = np.flatnonzero(~faulty)
    faulty_idx = np.flatnonzero(faulty)

    H_R = channels.H_bar[:, healthy_idx, :]
    H_B = channels.H_bar[:, faulty_idx, :]
    if fault.states_known:
        fixed_rows = np.einsum("b,tbm->tm", fault.states.conj(), H_B)
    else:
        fixed_rows = np.zeros((H_R.shape[0], H_R.shape[2]), dtype=np.complex128)
    factors, lifted = _lift(H_R, fixed_rows)

    logger.debug("partitioned N=%d into %d healthy / %d faulty elements", N, len(healthy_idx), len(faulty_idx))
    return PartitionedChannels(
        healthy_idx=healthy_idx,
        faulty_idx=faulty_idx,
        H_R=H_R,
        H_B=H_B,
        fixed_rows=fixed_rows,
        factors=factors,
        lifted=lifted,
        offsets=fault_offsets(H_B),
        ue_index=ue_index,
        states_known=fault.states_known,
    )


def full_configuration(v_R: np.ndarray, part: PartitionedChannels, states: Optional[np.ndarray]) -> np.ndarray:
    """Full length-N reflection vector: v_R on healthy elements, v_B on faulty ones."""
    v = np.empty(part.N, dtype=np.complex128)
    v[part.healthy_idx] = v_R
    v[part.faulty_idx] = 0.0 if states is None else states
    return v
