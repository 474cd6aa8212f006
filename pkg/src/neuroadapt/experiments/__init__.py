"""Config-driven reproduction runs and the command-line interface."""
from .config import ScenarioConfig, list_scenarios, load_scenario, signal_from_config
from .scenarios import (PlantSetup, ScenarioResult, apply_mismatch, build_plant, burn_in_state,
                        run_scenario, simulate_plant, summarize, true_theta_path)

__all__ = [
    "ScenarioConfig", "list_scenarios", "load_scenario", "signal_from_config", "PlantSetup",
    "ScenarioResult", "apply_mismatch", "build_plant", "burn_in_state", "run_scenario",
    "simulate_plant", "summarize", "true_theta_path",
]
