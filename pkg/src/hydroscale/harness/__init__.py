from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .run import ExperimentReport, replica_seed, run

__all__ = ["ConfigError", "ExperimentConfig", "ExperimentReport", "load_config", "parse_config", "replica_seed", "run"]
