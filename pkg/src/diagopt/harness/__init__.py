"""Experiment harness: configs, CSV artifacts and the command line."""

from .config import ConfigError, ExperimentConfig, ProblemConfig, dump_config, load_config
from .experiment import (
    OUTPUT_ENV_VAR,
    ComparisonReport,
    SeedSearchError,
    build_problem,
    reference_solution,
    run_experiment,
    seed_search,
    theory_overlays,
)
from .io import emit_rates, emit_traces, read_trace, write_trace

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ProblemConfig",
    "dump_config",
    "load_config",
    "OUTPUT_ENV_VAR",
    "ComparisonReport",
    "SeedSearchError",
    "build_problem",
    "reference_solution",
    "run_experiment",
    "seed_search",
    "theory_overlays",
    "emit_rates",
    "emit_traces",
    "read_trace",
    "write_trace",
]
