import math
from typing import Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Vector3 = Tuple[float, float, float]


def dbm_to_watts(value_dbm: float) -> float:
    return 10.0 ** (value_dbm / 10.0) / 1000.0


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def friis_reference_loss(wavelength: float) -> float:
    """Free-space loss (lambda / 4 pi)^2 at 1 m."""
    return (wavelength / (4.0 * math.pi)) ** 2


def derived_spacing(wavelength: float) -> float:
    return wavelength / 2.0


DEFAULT_ZETA0 = db_to_linear(-30.0)


# ============================================================================
# Scenario
# ============================================================================

class ScenarioConfig(BaseModel):
    """
    Geometry, array sizes, RF parameters and Monte Carlo controls of one run.

    Defaults reproduce the reference simulation table (30 GHz, 10x10 RIS,
    16-antenna AP, 12 dBm transmit power, -80 dBm noise). All values are SI
    and linear; dB conversions happen when a config file is read.

    zeta0 is the path loss at 1 m and defaults to -30 dB; "friis" selects the
    free-space value (lambda / 4 pi)^2 of the configured wavelength.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    # geometry (meters)
    p_AP: Vector3 = (0.0, 0.0, 10.0)
    p_RIS: Vector3 = (10.0, 34.0, 10.0)
    p_UE: Vector3 = (16.0, 16.0, 0.0)

    # arrays
    M: int = Field(16, ge=1)
    Nx: int = Field(10, ge=1)
    Ny: int = Field(10, ge=1)
    wavelength: float = Field(0.01, gt=0)
    spacing: Optional[float] = Field(None, gt=0)  # lambda/2 when omitted

    # RF (watts, linear)
    P: float = Field(dbm_to_watts(12.0), gt=0)
    noise_power: float = Field(dbm_to_watts(-80.0), gt=0)
    K_R: float = Field(10.0, ge=0)
    P_K: int = Field(10, ge=1)
    eta_i: float = Field(2.0, gt=0)
    eta_r: float = Field(2.0, gt=0)
    zeta0: Union[float, Literal["friis"]] = DEFAULT_ZETA0

    # target area and leakage points
    area_x: float = Field(30.0, gt=0)
    area_y: float = Field(30.0, gt=0)
    T: int = Field(125, ge=2)
    ue_index: int = Field(0, ge=0)
    r_excl: float = Field(1.0, gt=0)
    testpoint_max_attempts: int = Field(100_000, ge=1)

    # optimizers
    rho_gamma: float = Field(1.5, gt=1)
    gamma_mode: Literal["per_trial", "constant"] = "per_trial"
    gamma_snr_db: float = 0.0
    eps_gamma: float = Field(0.02, ge=0, lt=1)
    L: int = Field(500, ge=1)
    delta_bis: float = Field(1e-3, gt=0, lt=1)
    max_bisection_iter: int = Field(60, ge=1)
    naive_fast_path: bool = False

    # solver
    sdp_tol: float = Field(1e-6, gt=0)
    eps_psd: float = Field(1e-7, gt=0)
    eps_eq: float = Field(1e-7, gt=0)
    max_sdp_iter: int = Field(100, ge=1)
    solver_backend: Literal["native", "real_embedding"] = "native"
    solver_preset: Literal["default", "strict", "fast"] = "default"  # strict/fast replace the four keys above

    # Monte Carlo and outputs
    trials: int = Field(50, ge=1)
    seed: int = Field(0, ge=0)
    fault_counts: Tuple[int, ...] = (0, 5, 10, 15, 20, 25)
    pattern: Literal["uniform", "quadrant", "top_rows", "left_columns"] = "uniform"
    pad_structured: bool = True
    aggregate_mode: Literal["db_of_mean", "mean_of_db"] = "db_of_mean"
    heatmap_nx: int = Field(60, ge=1)
    heatmap_ny: int = Field(60, ge=1)

    @model_validator(mode="before")
    @classmethod
    def _resolve_derived(cls, data):
        if isinstance(data, dict):
            data = dict(data)
            if data.get("spacing") is None:
                data["spacing"] = derived_spacing(float(data.get("wavelength", 0.01)))
        return data

    @field_validator("fault_counts")
    @classmethod
    def _counts_non_negative(cls, value):
        if any(c < 0 for c in value):
            raise ValueError("fault counts must be non-negative")
        return tuple(value)

    @field_validator("zeta0")
    @classmethod
    def _zeta0_positive(cls, value):
        if value != "friis" and not value > 0:
            raise ValueError("zeta0 must be positive or 'friis'")
        return value

    @model_validator(mode="after")
    def _check_invariants(self):
        if self.ue_index >= self.T:
            raise ValueError("ue_index must be smaller than T")
        if math.dist(self.p_AP, self.p_RIS) <= 0:
            raise ValueError("p_AP and p_RIS coincide")
        if math.dist(self.p_UE, self.p_RIS) <= 0:
            raise ValueError("p_UE and p_RIS coincide")
        return self

    @property
    def N(self) -> int:
        return self.Nx * self.Ny

    @property
    def reference_loss(self) -> float:
        """zeta0 as a number."""
        if self.zeta0 == "friis":
            return friis_reference_loss(self.wavelength)
        return float(self.zeta0)

    @property
    def noise_to_power(self) -> float:
        """sigma_n^2 / P, the noise floor on the pre-noise signal-power scale."""
        return self.noise_power / self.P


class GridSpec(BaseModel):
    """Heatmap raster over the target area (cell centers, UE-centered)."""

    model_config = ConfigDict(frozen=True)

    nx: int = Field(60, ge=1)
    ny: int = Field(60, ge=1)
    average: int = Field(1, ge=1)  # NLoS redraws averaged per cell
