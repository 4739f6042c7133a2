"""Config-driven reproductions of the strategic-classification experiments."""

from .config import ScenarioConfig, load_config, parse_config, resolve_config, shipped_configs
from .runner import SCHEMA_VERSION, RunResult, run_scenario, summary_json, validate

__all__ = [
    "SCHEMA_VERSION",
    "RunResult",
    "ScenarioConfig",
    "load_config",
    "parse_config",
    "resolve_config",
    "run_scenario",
    "shipped_configs",
    "summary_json",
    "validate",
]
