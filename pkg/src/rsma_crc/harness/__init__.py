"""Experiment harness: grid oracles, sweeps, figures and the command line."""

from .oracle import brute_force_oracle, grid_ratio_max
from .plots import emit_plots
from .sweep import ResultRow, SweepConfig, run_sweep, write_results

__all__ = ["ResultRow", "SweepConfig", "brute_force_oracle", "emit_plots", "grid_ratio_max",
           "run_sweep", "write_results"]
