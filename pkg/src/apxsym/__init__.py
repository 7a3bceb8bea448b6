"""Approximate Lie and Q-conditional symmetries of PDEs with a small parameter."""
from __future__ import annotations

from .approx import GradedExpr, expand_dependent, grade, lift_generator, recursion_apply
from .detsys import derive_determining, invariance_condition, manifold_substitutions
from .expr import Verdict, is_zero, normalize, to_text
from .jet import Generator, JetSpace, prolong, total_derivative
from .parse import load_problem, parse_problem, print_problem
from .verify import check_isc, check_symmetry, epsilon_convergence, verify_solution

__version__ = "0.1.0"

__all__ = [
    "GradedExpr",
    "Generator",
    "JetSpace",
    "Verdict",
    "check_isc",
    "check_symmetry",
    "derive_determining",
    "epsilon_convergence",
    "expand_dependent",
    "grade",
    "invariance_condition",
    "is_zero",
    "lift_generator",
    "load_problem",
    "manifold_substitutions",
    "normalize",
    "parse_problem",
    "print_problem",
    "prolong",
    "recursion_apply",
    "to_text",
    "total_derivative",
    "verify_solution",
]
