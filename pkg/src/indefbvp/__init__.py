"""Positive solutions of ``u'' + nu a(x) g(u) = 0`` with an indefinite weight.

Neumann and periodic boundary conditions, hypothesis certificates,
eigenvalue thresholds, shooting and degree-guided solution search, and the
radial-annulus and damped (Liénard) variants.
"""

from .certify import EXISTS, INCONCLUSIVE, NONEXISTENCE, Certificate, check_hypotheses
from .config import DEFAULTS, Tolerances
from .eigen import EigenQuery, first_eigenvalue, lambda_thresholds
from .expr import DomainError, ExprError, parse_expr
from .model import Damping, Nonlinearity, ProblemSpec, Weight, sign_structure
from .ode import integrate, make_field
from .problem_io import load_annulus, load_problem, parse_problem
from .shoot import find_neumann_solutions, find_periodic_solutions, nu_sweep

__version__ = "0.1.0"

__all__ = [
    "Certificate", "DEFAULTS", "Damping", "DomainError", "EXISTS", "EigenQuery", "ExprError", "INCONCLUSIVE",
    "NONEXISTENCE", "Nonlinearity", "ProblemSpec", "Tolerances", "Weight", "check_hypotheses",
    "find_neumann_solutions", "find_periodic_solutions", "first_eigenvalue", "integrate", "lambda_thresholds",
    "load_annulus", "load_problem", "make_field", "nu_sweep", "parse_expr", "parse_problem", "sign_structure",
]
