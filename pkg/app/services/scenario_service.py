"""
Scenario plumbing: key-value config files, seed substreams and the leakage
test-point cloud.

Config files hold one `key = value` per line (`#` starts a comment). Vectors
are comma separated. dB-valued inputs use an explicit suffix and are converted
on load: `P_dbm`, `noise_power_dbm` (dBm -> W), `K_R_db` and `zeta0_db` (dB -> linear).
"""

from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Dict, Mapping, Optional

import numpy as np
from pydantic import ValidationError

from app.schemas.scenario import ScenarioConfig, db_to_linear, dbm_to_watts, derived_spacing

_SEQUENCE_KEYS = {"p_AP", "p_RIS", "p_UE", "fault_counts"}
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


class ScenarioServiceError(Exception):
    def __init__(
        self, *, detail: str, key: Optional[str] = None, exit_code: int = 2
    ) -> None:
        self.exit_code = exit_code
        self.detail = detail
        self.key = key
        super().__init__(detail)


class Substream(IntEnum):
    """Named random streams fanned out from the master seed."""
    TESTPOINTS = 0
    FAULT_INDICES = 1
    FAULT_STATES = 2
    NLOS = 3
    RANDOMIZATION = 4
    HEATMAP = 5


def substream(seed: int, trial: int, stream: Substream, *extra: int) -> np.random.Generator:
    """
    Independent generator for (seed, trial, stream, *extra).

    Streams depend only on their key, never on how many draws other streams
    made, so results do not depend on execution order or worker count.
    """
    key = (int(trial), int(stream)) + tuple(int(e) for e in extra)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


# ============================================================================
# Config files
# ============================================================================

def _canonical_key(raw_key: str, raw_value: str) -> tuple[str, object]:
    fields = ScenarioConfig.model_fields
    if raw_key in fields:
        return raw_key, raw_value
    if raw_key.endswith("_dbm") and raw_key[: -len("_dbm")] in fields:
        return raw_key[: -len("_dbm")], dbm_to_watts(_parse_float(raw_key, raw_value))
    if raw_key.endswith("_db") and raw_key[: -len("_db")] in fields:
        return raw_key[: -len("_db")], db_to_linear(_parse_float(raw_key, raw_value))
    raise ScenarioServiceError(detail=f"unknown config key {raw_key!r}", key=raw_key)


def _parse_float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError as exc:
        raise ScenarioServiceError(detail=f"{key}: {value!r} is not a number", key=key) from exc


def _parse_value(key: str, value: str) -> object:
    if key in _SEQUENCE_KEYS:
        parts = [p.strip() for p in value.strip("()[] ").split(",") if p.strip()]
        return tuple(parts)
    lowered = value.lower()
    if ScenarioConfig.model_fields[key].annotation is bool:
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ScenarioServiceError(detail=f"{key}: {value!r} is not a boolean", key=key)
    return value


def parse_config_text(text: str, overrides: Optional[Mapping[str, str]] = None) -> ScenarioConfig:
    """Build a config from key-value text; overrides win over file values."""
    values: Dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ScenarioServiceError(detail=f"line {lineno}: expected 'key = value', got {stripped!r}")
        raw_key, raw_value = (part.strip() for part in stripped.split("=", 1))
        key, value = _canonical_key(raw_key, raw_value)
        values[key] = _parse_value(key, value) if isinstance(value, str) else value
    for raw_key, raw_value in (overrides or {}).items():
        key, value = _canonical_key(raw_key.strip(), str(raw_value).strip())
        values[key] = _parse_value(key, value) if isinstance(value, str) else value
    return _validate(values)


def _validate(values: Dict[str, object]) -> ScenarioConfig:
    try:
        return ScenarioConfig(**values)
    except ValidationError as exc:
        first = exc.errors()[0]
        key = str(first["loc"][0]) if first.get("loc") else None
        raise ScenarioServiceError(
            detail=f"{key or 'config'}: {first['msg']}", key=key
        ) from exc


def load_config(path: str | Path, overrides: Optional[Mapping[str, str]] = None) -> ScenarioConfig:
    """Read a key-value config file; missing keys take the reference defaults."""
    path = Path(path)
    if not path.is_file():
        raise ScenarioServiceError(detail=f"config file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"), overrides)


def _format_value(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


def dump_config(cfg: ScenarioConfig) -> str:
    """
    Emit every field; reading the text back yields an identical config.

    spacing is left out while it still equals lambda/2, so an edited
    wavelength carries the spacing with it.
    """
    lines = ["# scenario config (SI units, linear scale)"]
    for name in ScenarioConfig.model_fields:
        value = getattr(cfg, name)
        if name == "spacing" and value == derived_spacing(cfg.wavelength):
            lines.append(f"# spacing = {_format_value(value)}  (lambda/2)")
            continue
        lines.append(f"{name} = {_format_value(value)}")
    return "\n".join(lines) + "\n"


# ============================================================================
# Test points
# ============================================================================

@dataclass(frozen=True)
class TestPointCloud:
    """T points on the ground plane; positions[ue_index] is the intended UE."""
    __test__ = False  # not a pytest class

    positions: np.ndarray
    ue_index: int

    @property
    def T(self) -> int:
        return self.positions.shape[0]

    @property
    def leakage_indices(self) -> np.ndarray:
        return np.array([t for t in range(self.T) if t != self.ue_index], dtype=int)


def sample_test_points(cfg: ScenarioConfig, rng: np.random.Generator) -> TestPointCloud:
    """
    Draw T-1 leakage points uniformly over the area rectangle centered on the UE,
    rejecting those closer than r_excl to the UE, and insert the UE at ue_index.
    """
    ue = np.asarray(cfg.p_UE, dtype=float)
    need = cfg.T - 1
    half = 0.5 * np.array([cfg.area_x, cfg.area_y])
    accepted = []
    count = 0
    attempts = 0
    while count < need:
        batch = max(need - count, 16)
        attempts += batch
        if attempts > cfg.testpoint_max_attempts:
            raise ScenarioServiceError(
                detail=(
                    f"rejection sampling gave up after {attempts} draws: area "
                    f"{cfg.area_x}x{cfg.area_y} m is too small for r_excl={cfg.r_excl} m"
                ),
                key="r_excl",
            )
        xy = ue[:2] + rng.uniform(-1.0, 1.0, size=(batch, 2)) * half
        cand = np.column_stack([xy, np.zeros(batch)])
        keep = cand[np.linalg.norm(cand - ue, axis=1) >= cfg.r_excl]
        take = keep[: need - count]
        accepted.append(take)
        count += take.shape[0]

    leakage = np.concatenate(accepted, axis=0) if accepted else np.empty((0, 3))
    positions = np.insert(leakage, cfg.ue_index, ue, axis=0)
    return TestPointCloud(positions=positions, ue_index=cfg.ue_index)
