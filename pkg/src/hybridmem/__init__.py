"""Simulator for page placement and migration on hybrid DRAM/NVM memory."""

from .config import SCHEMES, ConfigError, RunConfig
from .report import compare_baselines, emit_report, run_comparison
from .simulation import SimulationResult, run_simulation
from .workload import GeneratorSpec, SpecError, TraceError, generate, parse_trace, read_trace, write_trace

__all__ = [
    "SCHEMES",
    "ConfigError",
    "GeneratorSpec",
    "RunConfig",
    "SimulationResult",
    "SpecError",
    "TraceError",
    "compare_baselines",
    "emit_report",
    "generate",
    "parse_trace",
    "read_trace",
    "run_comparison",
    "run_simulation",
    "write_trace",
]
