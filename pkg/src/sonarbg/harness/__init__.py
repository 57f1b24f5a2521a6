"""Experiment configuration, Monte Carlo sweeps and result files."""

from .config import DimsConfig, ExperimentConfig, config_from_dict, dump_config, load_config
from .experiment import (
    run_realization,
    run_significance_sweep,
    run_sweep,
    run_trial,
    significance_split,
)
from .metrics import CellMetrics, MetricsSummary

__all__ = [
    "CellMetrics", "DimsConfig", "ExperimentConfig", "MetricsSummary", "config_from_dict",
    "dump_config", "load_config", "run_realization", "run_significance_sweep", "run_sweep",
    "run_trial", "significance_split",
]
