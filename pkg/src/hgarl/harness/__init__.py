"""Experiment runner, metrics and output."""
from .config import ConfigError, RunConfig, dump_config, load_config, parse_config_text
from .emit import csv_text, read_csv, write_outputs
from .metrics import SpeedupReport, compute_ar_at, compute_speedup, curve_table, mean_curve
from .runner import ExperimentResult, SeedResult, build_agents, run_experiment, run_seed
from .sweep import SweepPoint, best_point, phi_sweep

__all__ = [
    "ConfigError", "RunConfig", "dump_config", "load_config", "parse_config_text", "csv_text", "read_csv",
    "write_outputs", "SpeedupReport", "compute_ar_at", "compute_speedup", "curve_table", "mean_curve",
    "ExperimentResult", "SeedResult", "build_agents", "run_experiment", "run_seed", "SweepPoint",
    "best_point", "phi_sweep",
]
