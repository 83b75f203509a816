"""Configuration, orchestration and the command-line interface."""

from .config import ExperimentConfig, GeneratorSpec, KernelSpec, Thresholds, load_config, parse_config
from .runner import run_compare, run_limit, run_norms, run_simulate

__all__ = [
    "ExperimentConfig",
    "GeneratorSpec",
    "KernelSpec",
    "Thresholds",
    "load_config",
    "parse_config",
    "run_simulate",
    "run_limit",
    "run_compare",
    "run_norms",
]
