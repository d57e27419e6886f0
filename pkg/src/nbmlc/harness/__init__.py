from .campaign import (Campaign, NumericalFailure, PointRecord, calibrate, compare_codes, exhaustive_rate_baseline,
                       optimize_layers, run_simulation, select_codes, sweep_a, sweep_binwidth, sweep_rate)
from .config import ChannelSpec, CodeSpec, ConfigError, RateGrid, RunConfig, load_config, parse_config

__all__ = [
    "Campaign", "ChannelSpec", "CodeSpec", "ConfigError", "NumericalFailure", "PointRecord", "RateGrid", "RunConfig",
    "calibrate", "compare_codes", "exhaustive_rate_baseline", "load_config", "optimize_layers", "parse_config",
    "run_simulation", "select_codes", "sweep_a", "sweep_binwidth", "sweep_rate",
]
