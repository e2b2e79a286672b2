"""Simulation and diagnostics for mean-field jump diffusions with fast time oscillation."""

__version__ = "0.1.0"

from .errors import ConfigError, DivergenceError, EvaluationError, MVJumpError, ParseError
from .model import AveragedPair, Scenario, builtin_scenario, expression_scenario
from .solver import SolverConfig, simulate, simulate_coupled

__all__ = [
    "__version__",
    "MVJumpError",
    "ConfigError",
    "ParseError",
    "EvaluationError",
    "DivergenceError",
    "Scenario",
    "AveragedPair",
    "builtin_scenario",
    "expression_scenario",
    "SolverConfig",
    "simulate",
    "simulate_coupled",
]
