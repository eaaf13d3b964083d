"""Fractional variational problems: residual checks and expansion-based solves."""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import FracvarError
from .expr import Expression, differentiate, evaluate, parse
from .fracnum import GridFunction, gamma
from .problems import BoundarySpec, ConstraintSpec, ProblemSpec, builtin_fixture, cost, evaluate_trajectory

__all__ = [
    "BoundarySpec",
    "ConstraintSpec",
    "Expression",
    "FracvarError",
    "GridFunction",
    "ProblemSpec",
    "__version__",
    "builtin_fixture",
    "cost",
    "differentiate",
    "evaluate",
    "evaluate_trajectory",
    "gamma",
    "parse",
]
