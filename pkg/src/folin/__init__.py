"""Functional observers with exactly linear error dynamics.

The package decides whether a scalar functional ``z = q(x)`` of a nonlinear
plant ``dx/dt = F(x)``, ``y = H(x)`` admits an observer whose estimation
error obeys a prescribed linear ODE, synthesizes that observer, and checks
the result by sampling and by simulation.
"""
from .expr import parse
from .gfol import GeneralSpec, synthesize_general, transform_general, verify_71
from .jet import lie_derivatives, taylor_flow
from .lti import condition_61, design_corollary, obs_index, verify_luenberger
from .sim import SimConfig, error_decay_check, export_csv, simulate
from .span import CharPoly, char_from_roots, sample, solve_beta, solve_joint
from .synth import beta_from_observer, synthesize, transform_eval, verify_output, verify_pde
from .system import LTISystem, SystemModel, system_from_dict

__version__ = "0.1.0"

__all__ = [
    "parse", "SystemModel", "LTISystem", "system_from_dict",
    "taylor_flow", "lie_derivatives",
    "CharPoly", "char_from_roots", "sample", "solve_beta", "solve_joint",
    "synthesize", "beta_from_observer", "transform_eval", "verify_pde", "verify_output",
    "obs_index", "condition_61", "design_corollary", "verify_luenberger",
    "GeneralSpec", "verify_71", "synthesize_general", "transform_general",
    "SimConfig", "simulate", "error_decay_check", "export_csv",
]
