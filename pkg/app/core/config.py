from typing import Literal, Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="RIS_", env_file=".env", env_file_encoding="utf-8")

    OUTPUT_DIR: str = "results"  # Where CLI runs write CSVs and metadata
    JOBS: int = 1  # Worker processes for Monte Carlo trials
    LOG_LEVEL: str = "INFO"
    DEFAULT_CONFIG: Optional[str] = None  # Scenario file used when --config is omitted
    SOLVER_PRESET: Optional[Literal["default", "strict", "fast"]] = None  # Overrides solver_preset of the scenario

    MAX_FAILURE_RATE: float = 0.1  # Share of failed (trial, method) solves tolerated before exit 3

settings = Settings()
