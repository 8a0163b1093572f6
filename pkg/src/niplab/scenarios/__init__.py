"""Scenario configuration and the command line front end."""

from .config import (
    ChainModel,
    CrossModel,
    InitialSpec,
    KgModel,
    MatrixModel,
    ScenarioConfig,
    bundled_configs,
    load_config,
    parse_config,
)
from .runner import BenchRow, RunReport, benchmark_metric_routes, cross_check, run, write_report

__all__ = [
    "BenchRow",
    "ChainModel",
    "CrossModel",
    "InitialSpec",
    "KgModel",
    "MatrixModel",
    "RunReport",
    "ScenarioConfig",
    "benchmark_metric_routes",
    "bundled_configs",
    "cross_check",
    "load_config",
    "parse_config",
    "run",
    "write_report",
]
