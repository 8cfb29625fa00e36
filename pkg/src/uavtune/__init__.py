"""Simulated evolution of nested-PID gains for a tethered hexacopter."""
from .config import ExperimentConfig, load_config, parse_config, serialize_config
from .controller import GainSet, Waypoint
from .dynamics import TetherConfig, VehicleParams, VehicleState, WindField
from .estimator import StagedGainTuner
from .evolution import Individual, Population
from .experiment import (evaluate_generalisation, gain_sweep, run_ose, run_tse)
from .fitness import FitnessLimits
from .stats import mann_whitney_u
from .supervisor import Environment, SensorNoise, TerminationRules, evaluate, run_trial

__version__ = "0.1.0"

__all__ = [
    "Environment", "ExperimentConfig", "FitnessLimits", "GainSet", "Individual", "Population",
    "SensorNoise", "StagedGainTuner", "TerminationRules", "TetherConfig", "VehicleParams",
    "VehicleState", "Waypoint", "WindField", "evaluate", "evaluate_generalisation", "gain_sweep",
    "load_config", "mann_whitney_u", "parse_config", "run_ose", "run_trial", "run_tse",
    "serialize_config",
]
