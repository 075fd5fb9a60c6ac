from .config import ConfigError, ExperimentConfig, load_config, parse_config, resolve
from .experiments import REGISTRY, ExperimentResult, defaults, run_experiment, verify_all
from .reports import ComparisonRow, emit_reports, make_row

__all__ = [
    "REGISTRY",
    "ComparisonRow",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentResult",
    "defaults",
    "emit_reports",
    "load_config",
    "make_row",
    "parse_config",
    "resolve",
    "run_experiment",
    "verify_all",
]
