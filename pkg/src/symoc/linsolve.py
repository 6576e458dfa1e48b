"""Linear algebra over the exact expression field.

Gauss-Jordan elimination where the matrix entries are :class:`Expr` values
(rational functions of free symbols), plus the bridge that turns a
polynomial identity with unknown coefficient symbols into such a linear
system by matching monomials.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import NonlinearIdentityError
from .expr import Expr, ONE, ZERO, Mono

__all__ = ["LinearSolution", "solve_linear", "identity_to_linear_system"]


@dataclass(frozen=True)
class LinearSolution:
    """Reduced form of A z = rhs over the expression field.

    ``particular`` sets every free variable to zero; ``nullspace`` holds one
    basis vector per free variable, in column order; ``leftovers`` are the
    reduced right-hand sides of rows whose coefficients eliminated to zero
    but whose right-hand side did not (for a consistent system it is empty;
    for parameter fitting these are exactly the compatibility conditions).
    """

    particular: tuple[Expr, ...]
    nullspace: tuple[tuple[Expr, ...], ...]
    leftovers: tuple[Expr, ...]
    pivots: tuple[int, ...]

    @property
    def consistent(self) -> bool:
        return not self.leftovers

    @property
    def unique(self) -> bool:
        return self.consistent and not self.nullspace


def solve_linear(rows: Sequence[Sequence[Expr]], rhs: Sequence[Expr]) -> LinearSolution:
    m = len(rows)
    if len(rhs) != m:
        raise ValueError("rhs length mismatch")
    n = len(rows[0]) if m else 0
    a = [list(r) + [b] for r, b in zip(rows, rhs)]
    for r in a:
        if len(r) != n + 1:
            raise ValueError("ragged matrix")

    pivots: list[int] = []
    rank = 0
    for col in range(n):
        pivot_row = next((k for k in range(rank, m) if not a[k][col].is_zero), None)
        if pivot_row is None:
            continue
        a[rank], a[pivot_row] = a[pivot_row], a[rank]
        inv = ONE / a[rank][col]
        a[rank] = [entry * inv for entry in a[rank]]
        for k in range(m):
            if k != rank and not a[k][col].is_zero:
                factor = a[k][col]
                a[k] = [ek - factor * er for ek, er in zip(a[k], a[rank])]
        pivots.append(col)
        rank += 1

    leftovers = tuple(a[k][n] for k in range(rank, m) if not a[k][n].is_zero)

    particular = [ZERO] * n
    for r, col in enumerate(pivots):
        particular[col] = a[r][n]

    free_cols = [c for c in range(n) if c not in pivots]
    nullspace: list[tuple[Expr, ...]] = []
    for fc in free_cols:
        v = [ZERO] * n
        v[fc] = ONE
        for r, col in enumerate(pivots):
            v[col] = -a[r][fc]
        nullspace.append(tuple(v))

    return LinearSolution(tuple(particular), tuple(nullspace), leftovers, tuple(pivots))


def identity_to_linear_system(
    residual: Expr,
    unknowns: Sequence[str],
    identity_vars: Iterable[str],
) -> tuple[list[list[Expr]], list[Expr], list[Mono]]:
    """Turn ``residual == 0 identically in identity_vars`` into linear
    equations on ``unknowns``.

    The residual's numerator is grouped by monomials in the identity
    variables; each group must be affine in the unknowns, otherwise
    :class:`NonlinearIdentityError` is raised.  Returns (rows, rhs, keys)
    where keys names the identity monomial of each row.
    """
    identity_vars = set(identity_vars)
    unknown_pos = {name: j for j, name in enumerate(unknowns)}

    # the identity holds iff the numerator polynomial vanishes identically
    num = residual._num  # noqa: SLF001 - kernel-internal access by design
    rows_map: dict[Mono, list[Expr]] = {}
    rhs_map: dict[Mono, Expr] = {}

    def row_for(key: Mono) -> list[Expr]:
        if key not in rows_map:
            rows_map[key] = [ZERO] * len(unknowns)
            rhs_map[key] = ZERO
        return rows_map[key]

    for mono, c in num.items():
        ident_part: list[tuple[str, int]] = []
        unk_part: list[tuple[str, int]] = []
        rest_part: list[tuple[str, int]] = []
        for name, e in mono:
            if name in identity_vars:
                ident_part.append((name, e))
            elif name in unknown_pos:
                unk_part.append((name, e))
            else:
                rest_part.append((name, e))
        udeg = sum(e for _, e in unk_part)
        key = tuple(ident_part)
        coeff = Expr({tuple(rest_part): c})
        row = row_for(key)
        if udeg == 0:
            rhs_map[key] = rhs_map[key] - coeff
        elif udeg == 1:
            j = unknown_pos[unk_part[0][0]]
            row[j] = row[j] + coeff
        else:
            term = Expr({mono: c})
            raise NonlinearIdentityError(f"term {term} is degree {udeg} in the unknowns")

    keys = sorted(rows_map, key=lambda k: (sum(e for _, e in k), k))
    rows = [rows_map[k] for k in keys]
    rhs = [rhs_map[k] for k in keys]
    return rows, rhs, keys
