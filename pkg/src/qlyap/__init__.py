"""Lyapunov feedback control of closed finite-level quantum systems.

Standard, bang-bang, approximate bang-bang and switching laws, an exact
zero-order-hold simulator with zero-point location, chattering analysis for
two-level systems, invariant-set tests and perturbation experiments.
"""
from .controllers import Controller, ControllerConfig
from .core import DensityMatrix, fidelity, spectrum
from .errors import (ConditionError, DimensionError, NotHermitianError, NumericalError,
                     QlyapError, ScenarioError)
from .invariant import build_invariant_data, membership, target_isolated
from .lyapunov import build_p, drift_terms, lyapunov_value
from .model import QuantumSystem, TargetSpec, builtin_system, check_conditions
from .oscillation import TwoLevelParams, oscillation_condition, oscillation_onset_scan
from .robustness import (budget_experiment, check_bound, epsilon_budget, paired_run,
                         sample_perturbation)
from .scenario import Scenario, load_builtin
from .simulator import SimConfig, Trajectory, run, time_to_fidelity

__version__ = "0.1.0"

__all__ = [
    "ConditionError", "Controller", "ControllerConfig", "DensityMatrix", "DimensionError",
    "NotHermitianError", "NumericalError", "QlyapError", "QuantumSystem", "Scenario",
    "ScenarioError", "SimConfig", "TargetSpec", "Trajectory", "TwoLevelParams",
    "budget_experiment", "build_invariant_data", "build_p", "builtin_system", "check_bound",
    "check_conditions", "drift_terms", "epsilon_budget", "fidelity", "load_builtin",
    "lyapunov_value", "membership", "oscillation_condition", "oscillation_onset_scan",
    "paired_run", "run", "sample_perturbation", "spectrum", "target_isolated",
    "time_to_fidelity",
]
