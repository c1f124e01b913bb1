"""Co-simulation of control loops closed over an 802.11b DCF cell, with
cross-layer adaptive feedback scheduling of the sampling periods."""

from .config import ConfigError, ScenarioConfig, emit_config, load_config, parse_config
from .dcf import MacParams, frame_airtime
from .runner import Simulation, SimulationResult, compare, run_scenario, sweep

__all__ = [
    "ConfigError", "ScenarioConfig", "emit_config", "load_config", "parse_config",
    "MacParams", "frame_airtime", "Simulation", "SimulationResult", "compare",
    "run_scenario", "sweep",
]
__version__ = "0.1.0"
