__version__ = "0.1.0"

from .streams import *
from .graph import *
from .problems import *
from .samplers import *
from .metrics import *
from .theory import *
from .config import ConfigError, ExperimentConfig, config_from_dict, load_config, published_defaults
from .harness import compare_algorithms, init_ablation, run_experiment, sweep_rho
from .cli import main

__all__ = [
    "streams",
    "graph",
    "problems",
    "samplers",
    "metrics",
    "theory",
    "config",
    "harness",
    "report",
    "checks",
    "ConfigError",
    "ExperimentConfig",
    "config_from_dict",
    "load_config",
    "published_defaults",
    "run_experiment",
    "compare_algorithms",
    "sweep_rho",
    "init_ablation",
    "main",
]
