"""Stochastic habit-formation growth model: HJB solver, exact SDE simulation and verification tools."""

from .model import (
    CoState,
    ModelParams,
    State,
    ValidationReport,
    f_tilde,
    h_max,
    hamiltonian_G,
    hamiltonian_g,
    lower_bound_rhs,
    optimal_consumption,
    running_utility,
    validate_params,
)
from .hjb import GridSpec, PolicyField, SolveResult, ValueField, solve_hjb
from .reduced import GridSpec1D, solve_reduced_1d
from .sde import BrownianPair, ControlPath, PathBundle, TimeGrid
from .utility_mc import McEstimate, evaluate_utility, utility_tail_check
from .verify import FeedbackMap, VerificationReport, feedback_map, simulate_closed_loop, verify

__version__ = "0.1.0"
