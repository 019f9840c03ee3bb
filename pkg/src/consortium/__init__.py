"""Bacteria-microalgae consortium in a chemostat: steady states, productivity and trade-offs."""

from .equilibria import Regime, Stability, classify, psi_alpha, psi_alpha_inv
from .errors import (
    ConsortiumError,
    ConvergenceError,
    DomainError,
    ExistenceError,
    InfeasibleError,
    MembershipError,
    PreconditionError,
)
from .model import DEFAULTS, Control, ModelParams, State, jacobian, ode_rhs
from .objectives import AdmissibleSet, evaluate, p_in, p_out, p_theta, p_yield, theta0
from .optimizer import OptimOptions, OptimResult, maximize_p_out, maximize_p_theta, maximize_yield_alpha
from .pareto import dominance_check, reachable_set, sweep_front
from .sim import converge_to_equilibrium, integrate

__version__ = "0.1.0"

__all__ = [
    "AdmissibleSet",
    "ConsortiumError",
    "Control",
    "ConvergenceError",
    "DomainError",
    "ExistenceError",
    "InfeasibleError",
    "MembershipError",
    "ModelParams",
    "OptimOptions",
    "OptimResult",
    "PreconditionError",
    "Regime",
    "Stability",
    "State",
    "DEFAULTS",
    "classify",
    "converge_to_equilibrium",
    "dominance_check",
    "evaluate",
    "integrate",
    "jacobian",
    "maximize_p_out",
    "maximize_p_theta",
    "maximize_yield_alpha",
    "ode_rhs",
    "p_in",
    "p_out",
    "p_theta",
    "p_yield",
    "psi_alpha",
    "psi_alpha_inv",
    "reachable_set",
    "sweep_front",
    "theta0",
]
