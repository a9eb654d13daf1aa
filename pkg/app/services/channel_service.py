"""
Propagation model: steering vectors, pathloss, the LoS AP-RIS matrix G, the
Rician RIS-point vectors h_t and the cascaded matrices H_t = diag(h_t^H) G.

Geometry conventions:
- The RIS is a vertical Nx x Ny grid centered on p_RIS, facing the horizontal
  direction of the AP-UE midpoint. Element (ix, iy) has flat index iy*Nx + ix;
  ix grows along the horizontal grid axis (left to right seen from the front),
  iy grows along +z.
- The AP is a half-wavelength ULA centered on p_AP, horizontal and
  perpendicular to the AP->RIS direction (boresight toward the RIS).
- Steering phases use full 3-D directions: entry_n = exp(j 2pi/lambda <r_n - r_0, u>).
  Incoming waves use their propagation direction, so the cascaded phase at
  element n tracks the AP->element->point path length.
"""

from dataclasses import dataclass

import numpy as np

from app.schemas.scenario import ScenarioConfig
from app.services.scenario_service import TestPointCloud

_UP = np.array([0.0, 0.0, 1.0])
LOS_ONLY_K = 1e9  # Rician factors at or above this are treated as pure LoS


class ChannelServiceError(Exception):
    def __init__(self, *, detail: str, exit_code: int = 2) -> None:
        self.exit_code = exit_code
        self.detail = detail
        super().__init__(detail)


@dataclass(frozen=True)
class ArrayGeometry:
    ris_positions: np.ndarray   # (N, 3)
    ris_normal: np.ndarray      # unit, horizontal, facing the served area
    ris_axis: np.ndarray        # unit grid axis for ix
    ap_positions: np.ndarray    # (M, 3)
    p_ris: np.ndarray
    p_ap: np.ndarray


@dataclass(frozen=True)
class ChannelSet:
    """Channels for every test point; index cloud.ue_index is the intended UE."""
    G: np.ndarray        # (N, M)
    h: np.ndarray        # (T, N)
    H_bar: np.ndarray    # (T, N, M)
    gamma_i: float
    gamma_g: np.ndarray  # (T,)

    @property
    def N(self) -> int:
        return self.G.shape[0]

    @property
    def M(self) -> int:
        return self.G.shape[1]


def _unit(vec: np.ndarray, what: str) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm <= 0.0 or not np.isfinite(norm):
        raise ChannelServiceError(detail=f"{what} has zero length")
    return vec / norm


def _horizontal_axis(direction: np.ndarray) -> np.ndarray:
    axis = np.cross(_UP, direction)
    if np.linalg.norm(axis) < 1e-12:
        return np.array([1.0, 0.0, 0.0])
    return axis / np.linalg.norm(axis)


def build_geometry(cfg: ScenarioConfig) -> ArrayGeometry:
    p_ris = np.asarray(cfg.p_RIS, dtype=float)
    p_ap = np.asarray(cfg.p_AP, dtype=float)
    p_ue = np.asarray(cfg.p_UE, dtype=float)

    facing = 0.5 * (p_ap + p_ue) - p_ris
    facing[2] = 0.0
    if np.linalg.norm(facing) < 1e-12:
        facing = p_ue - p_ris
    normal = _unit(facing, "RIS facing direction")
    axis = _horizontal_axis(normal)

    ix = np.arange(cfg.Nx) - 0.5 * (cfg.Nx - 1)
    iy = np.arange(cfg.Ny) - 0.5 * (cfg.Ny - 1)
    gx, gy = np.meshgrid(ix, iy)  # rows follow iy, so the flat index is iy*Nx + ix
    ris_positions = (
        p_ris
        + cfg.spacing * gx.reshape(-1, 1) * axis
        + cfg.spacing * gy.reshape(-1, 1) * _UP
    )

    ap_dir = _unit(p_ris - p_ap, "AP->RIS direction")
    ap_axis = _horizontal_axis(ap_dir)
    offsets = (np.arange(cfg.M) - 0.5 * (cfg.M - 1)) * (cfg.wavelength / 2.0)
    ap_positions = p_ap + offsets.reshape(-1, 1) * ap_axis

    return ArrayGeometry(
        ris_positions=ris_positions,
        ris_normal=normal,
        ris_axis=axis,
        ap_positions=ap_positions,
        p_ris=p_ris,
        p_ap=p_ap,
    )


def steering_vector(element_positions: np.ndarray, direction: np.ndarray, wavelength: float) -> np.ndarray:
    """Unit-modulus array response with the phase reference at the first element."""
    if wavelength <= 0:
        raise ChannelServiceError(detail="wavelength must be positive")
    u = _unit(np.asarray(direction, dtype=float), "steering direction")
    pos = np.asarray(element_positions, dtype=float)
    phase = (2.0 * np.pi / wavelength) * ((pos - pos[0]) @ u)
    return np.exp(1j * phase)


def pathloss(zeta0: float, distance: float, exponent: float) -> float:
    """zeta0 / distance^exponent."""
    if distance <= 0:
        raise ChannelServiceError(detail=f"distance must be positive, got {distance}")
    return zeta0 / distance ** exponent


def ap_ris_channel(cfg: ScenarioConfig, geometry: ArrayGeometry) -> np.ndarray:
    """G = sqrt(gamma_i) b(psi_A) a(psi_D)^H, rank one."""
    d1 = float(np.linalg.norm(geometry.p_ris - geometry.p_ap))
    if d1 <= 0:
        raise ChannelServiceError(detail="AP and RIS positions coincide")
    gamma_i = pathloss(cfg.reference_loss, d1, cfg.eta_i)
    propagation = (geometry.p_ris - geometry.p_ap) / d1
    b = steering_vector(geometry.ris_positions, propagation, cfg.wavelength)
    a = steering_vector(geometry.ap_positions, propagation, cfg.wavelength)
    return np.sqrt(gamma_i) * np.outer(b, a.conj())


def nlos_from_paths(
    gamma_g: float,
    fading: np.ndarray,
    directions: np.ndarray,
    element_positions: np.ndarray,
    wavelength: float,
) -> np.ndarray:
    """sqrt(gamma_g / P_K) * sum_p fading_p o b(psi_p) for explicit path draws."""
    fading = np.atleast_2d(fading)
    directions = np.atleast_2d(directions)
    n_paths = fading.shape[0]
    total = np.zeros(fading.shape[1], dtype=np.complex128)
    for p in range(n_paths):
        total += fading[p] * steering_vector(element_positions, directions[p], wavelength)
    return np.sqrt(gamma_g / n_paths) * total


def _hemisphere_directions(normal: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    draws = rng.standard_normal((count, 3))
    draws /= np.linalg.norm(draws, axis=1, keepdims=True)
    flip = draws @ normal < 0
    draws[flip] *= -1.0
    return draws


def nlos_component(
    cfg: ScenarioConfig,
    geometry: ArrayGeometry,
    point: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Scattered RIS->point vector with P_K paths and CN(0, I) fading per path."""
    d2 = float(np.linalg.norm(np.asarray(point, dtype=float) - geometry.p_ris))
    gamma_g = pathloss(cfg.reference_loss, d2, cfg.eta_r)
    n = geometry.ris_positions.shape[0]
    directions = _hemisphere_directions(geometry.ris_normal, cfg.P_K, rng)
    raw = rng.standard_normal((cfg.P_K, n, 2))
    fading = (raw[..., 0] + 1j * raw[..., 1]) / np.sqrt(2.0)
    return nlos_from_paths(gamma_g, fading, directions, geometry.ris_positions, cfg.wavelength)


def los_component(cfg: ScenarioConfig, geometry: ArrayGeometry, point: np.ndarray) -> np.ndarray:
    offset = np.asarray(point, dtype=float) - geometry.p_ris
    d2 = float(np.linalg.norm(offset))
    gamma_g = pathloss(cfg.reference_loss, d2, cfg.eta_r)
    return np.sqrt(gamma_g) * steering_vector(geometry.ris_positions, offset / d2, cfg.wavelength)


def rician_channel(
    cfg: ScenarioConfig,
    geometry: ArrayGeometry,
    point: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """sqrt(K/(1+K)) h_LoS + sqrt(1/(1+K)) h_NLoS."""
    k = cfg.K_R
    if k >= LOS_ONLY_K:
        return los_component(cfg, geometry, point)
    nlos = nlos_component(cfg, geometry, point, rng)
    if k == 0:
        return nlos
    los = los_component(cfg, geometry, point)
    return np.sqrt(k / (1.0 + k)) * los + np.sqrt(1.0 / (1.0 + k)) * nlos


def cascade(h: np.ndarray, G: np.ndarray) -> np.ndarray:
    """diag(h^H) G: row n of G weighted by conj(h_n)."""
    h = np.asarray(h)
    if h.ndim != 1 or h.shape[0] != G.shape[0]:
        raise ChannelServiceError(
            detail=f"cascade dimension mismatch: h has shape {h.shape}, G has {G.shape}"
        )
    return h.conj()[:, None] * G


def build_channel_set(
    cfg: ScenarioConfig,
    geometry: ArrayGeometry,
    cloud: TestPointCloud,
    rng: np.random.Generator,
) -> ChannelSet:
    """Synthesize G and the Rician channel of every test point from one NLoS stream."""
    G = ap_ris_channel(cfg, geometry)
    gamma_i = pathloss(cfg.reference_loss, float(np.linalg.norm(geometry.p_ris - geometry.p_ap)), cfg.eta_i)
    h = np.stack([rician_channel(cfg, geometry, p, rng) for p in cloud.positions])
    H_bar = h.conj()[:, :, None] * G[None, :, :]
    gamma_g = np.array([
        pathloss(cfg.reference_loss, float(np.linalg.norm(p - geometry.p_ris)), cfg.eta_r)
        for p in cloud.positions
    ])
    return ChannelSet(G=G, h=h, H_bar=H_bar, gamma_i=gamma_i, gamma_g=gamma_g)

