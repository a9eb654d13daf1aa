# Scenario schemas
from app.schemas.scenario import (
    ScenarioConfig,
    GridSpec,
    dbm_to_watts,
    db_to_linear,
)

# Experiment schemas
from app.schemas.experiment import (
    SweepSpec,
    Command,
    AggregateRecord,
)

__all__ = [
    # Scenario
    "ScenarioConfig",
    "GridSpec",
    "dbm_to_watts",
    "db_to_linear",
    # Experiment
    "SweepSpec",
    "Command",
    "AggregateRecord",
]
