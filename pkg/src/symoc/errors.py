"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: format/usage problems exit 2, solver
failures (no root, singular systems, nonconvergence, unsupported problem
class) exit 3.
"""

from __future__ import annotations


class SymocError(Exception):
    """Base class for package errors."""


class ProblemFormatError(SymocError):
    """Problem file is malformed or violates a structural invariant."""


class UnsupportedError(SymocError):
    """Input is valid but outside the supported class of a method."""


class SolverError(SymocError):
    """A solve failed: no trivializing parameter, singular system,
    inconsistent boundary data, nonconvergence."""


class InvalidFamilyError(SymocError):
    """Transformation family violates its own invariants (not the identity
    at parameter zero, malformed maps)."""


class MissingGaugeError(SymocError):
    """Family has no gauge attached; synthesize_gauge can build one."""


class NonlinearIdentityError(SymocError):
    """Coefficient matching produced equations that are not linear in the
    unknowns."""
