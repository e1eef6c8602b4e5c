"""Experiment harness: seeded test-bed generation, the inequality
experiments E1-E7, and the command-line interface."""

from .config import ExperimentConfig, standard_config
from .experiments import ExperimentReport, ReportRow, run_experiment

__all__ = [
    "ExperimentConfig",
    "standard_config",
    "ExperimentReport",
    "ReportRow",
    "run_experiment",
]
