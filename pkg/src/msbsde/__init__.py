"""Multistep spline solver for decoupled backward stochastic differential equations."""
from .estimator import MultistepBSDESolver
from .exceptions import (ConfigError, InsufficientDataError, InvalidArgumentError,
                         NumericalDomainError, ResourceLimitError, SingularSystemError)
from .grid import SpaceGrid, TimeGrid, balance_space_grid, build_time_grid, locate_cell
from .problems import PROBLEMS, ProblemSpec, get_problem
from .scheme import BootstrapOptions, SolveResult, SolverConfig, scheme_weights, solve_backward

__version__ = "0.1.0"

__all__ = [
    "BootstrapOptions", "ConfigError", "InsufficientDataError", "InvalidArgumentError",
    "MultistepBSDESolver", "NumericalDomainError", "PROBLEMS", "ProblemSpec",
    "ResourceLimitError", "SingularSystemError", "SolveResult", "SolverConfig", "SpaceGrid",
    "TimeGrid", "balance_space_grid", "build_time_grid", "get_problem", "locate_cell",
    "scheme_weights", "solve_backward",
]
