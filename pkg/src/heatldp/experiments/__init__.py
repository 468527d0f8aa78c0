"""Configuration-driven experiments and their reports."""

from heatldp.experiments.config import EXPERIMENTS, ConfigError, ExperimentConfig, load_config, parse_config
from heatldp.experiments.report import SUMMARY_SCHEMA, emit_report
from heatldp.experiments.runner import ResultBundle, run_experiment

__all__ = [
    "EXPERIMENTS",
    "SUMMARY_SCHEMA",
    "ConfigError",
    "ExperimentConfig",
    "ResultBundle",
    "emit_report",
    "load_config",
    "parse_config",
    "run_experiment",
]
