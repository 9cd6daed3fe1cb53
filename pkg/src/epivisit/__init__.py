"""Agent-based SEIR epidemic simulation driven by weekly activity/visit schedules."""

__version__ = "0.1.0"

from .behavior import Action, BehaviorModel, GlobalObservables, LocalObservable, builtin
from .config import Config, load_config, validate_config
from .disease import DiseaseModel, HealthState, default_seir_model
from .engine import Engine, RunParameters, SimulationOutputs, run
from .output import emit_epicurve, write_outputs
from .population import Person, Population, Visit, generate_random_population, generate_smallville, load_population

__all__ = [
    "Action",
    "BehaviorModel",
    "Config",
    "DiseaseModel",
    "Engine",
    "GlobalObservables",
    "HealthState",
    "LocalObservable",
    "Person",
    "Population",
    "RunParameters",
    "SimulationOutputs",
    "Visit",
    "builtin",
    "default_seir_model",
    "emit_epicurve",
    "generate_random_population",
    "generate_smallville",
    "load_config",
    "load_population",
    "run",
    "validate_config",
    "write_outputs",
]
