"""symoc: exact global solutions of invariant optimal control problems.

Three independent routes to the same answer:

* :mod:`symoc.noether` - verify a parameter family of transformations leaves
  the problem invariant, pick the parameter value that makes the zero control
  feasible, and invert the transformation (exact, symbolic).
* :mod:`symoc.leitmann` - coordinate-transformation route for scalar
  problems with velocity-quadratic integrands (exact, symbolic).
* :mod:`symoc.oracle` - direct transcription to a finite-dimensional
  program solved numerically (independent cross-check).
"""

from __future__ import annotations

from .errors import (
    SymocError,
    ProblemFormatError,
    UnsupportedError,
    SolverError,
    InvalidFamilyError,
    MissingGaugeError,
    NonlinearIdentityError,
)
from .expr import Expr, VarSpace, parse, total_derivative
from .problem import ProblemSpec, Solution, load_problem, loads_problem, dumps_problem
from .symmetry import TransformFamily, InvarianceReport, check_invariance, synthesize_gauge, find_symmetry_ansatz
from .noether import GeneralizedProblem, ParameterFit, generalize, fit_parameter, certify_trivial
from .noether import solve as noether_solve
from .leitmann import LeitmannTransform, find_transform, leitmann_solve, check_functional_identity
from .oracle import (
    OracleResult,
    transcribe_and_solve,
    discrete_objective,
    max_defect,
    check_derivatives,
    convergence_study,
)

__all__ = [
    "SymocError",
    "ProblemFormatError",
    "UnsupportedError",
    "SolverError",
    "InvalidFamilyError",
    "MissingGaugeError",
    "NonlinearIdentityError",
    "Expr",
    "VarSpace",
    "parse",
    "total_derivative",
    "ProblemSpec",
    "Solution",
    "load_problem",
    "loads_problem",
    "dumps_problem",
    "TransformFamily",
    "InvarianceReport",
    "check_invariance",
    "synthesize_gauge",
    "find_symmetry_ansatz",
    "GeneralizedProblem",
    "ParameterFit",
    "generalize",
    "fit_parameter",
    "certify_trivial",
    "noether_solve",
    "LeitmannTransform",
    "find_transform",
    "leitmann_solve",
    "check_functional_identity",
    "OracleResult",
    "transcribe_and_solve",
    "discrete_objective",
    "max_defect",
    "check_derivatives",
    "convergence_study",
]

__version__ = "0.1.0"
