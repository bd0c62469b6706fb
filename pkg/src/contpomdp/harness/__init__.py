"""Experiment configuration, episode runner and result tables."""

from contpomdp.harness.config import ExperimentConfig, load_config
from contpomdp.harness.experiment import (
    EpisodeRecord,
    SummaryStats,
    run_comparison,
    run_discretization_sweep,
    run_episode,
    run_experiment,
)

__all__ = [
    "EpisodeRecord", "ExperimentConfig", "SummaryStats", "load_config", "run_comparison",
    "run_discretization_sweep", "run_episode", "run_experiment",
]
