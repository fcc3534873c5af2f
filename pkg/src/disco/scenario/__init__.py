"""DDoS detection scenario driven over a simulated deployment."""
from .config import ConfigInvalid, ScenarioConfig, bundled_config, load_config, parse_config
from .harness import World, dump_metrics, run_scenario

__all__ = [
    "ConfigInvalid",
    "ScenarioConfig",
    "World",
    "bundled_config",
    "dump_metrics",
    "load_config",
    "parse_config",
    "run_scenario",
]
