"""Exact rational expression kernel.

Multivariate polynomials, and quotients of polynomials, over exact rational
coefficients.  Every ``Expr`` is canonicalized on construction: expanded,
monomials sorted under a fixed graded-lexicographic order, coefficients
gcd-reduced with monic denominator polynomials.  Equality is mathematical
equality (cross-multiplied for quotients); the symmetry machinery in the
rest of the package leans on that being exact.

Variables are plain names registered in a :class:`VarSpace`; the kernel
itself does not care which names are states, controls, or free symbols,
except in :func:`total_derivative` where the distinction matters.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

__all__ = [
    "Expr",
    "VarSpace",
    "ParseError",
    "EvalError",
    "NotPolynomialError",
    "parse",
    "total_derivative",
    "ZERO",
    "ONE",
]

# A monomial maps variable names to positive integer exponents, stored as a
# name-sorted tuple so it can key a dict.
Mono = tuple[tuple[str, int], ...]
Poly = dict[Mono, Fraction]

_EMPTY: Mono = ()
_IDENT_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")

Scalar = Union[int, Fraction, float, "Expr"]


class ParseError(ValueError):
    """Syntax or resolution error, with the offending position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class EvalError(ValueError):
    """Numeric evaluation failed (missing assignment or zero denominator)."""


class NotPolynomialError(ValueError):
    """Operation requires polynomial dependence on a variable that sits in a
    denominator."""


# ---------------------------------------------------------------------------
# raw polynomial helpers (dict[Mono, Fraction] with zero coefficients pruned)
# ---------------------------------------------------------------------------


def _mono_key(m: Mono) -> tuple[int, Mono]:
    return (sum(e for _, e in m), m)


def _mono_mul(a: Mono, b: Mono) -> Mono:
    if not a:
        return b
    if not b:
        return a
    exps: dict[str, int] = dict(a)
    for name, e in b:
        exps[name] = exps.get(name, 0) + e
    return tuple(sorted(exps.items()))


def _mono_div(a: Mono, b: Mono) -> Mono | None:
    """a / b, or None when b does not divide a."""
    exps = dict(a)
    for name, e in b:
        have = exps.get(name, 0) - e
        if have < 0:
            return None
        if have == 0:
            del exps[name]
        else:
            exps[name] = have
    return tuple(sorted(exps.items()))


def _poly_add(a: Poly, b: Poly) -> Poly:
    out = dict(a)
    for m, c in b.items():
        s = out.get(m, Fraction(0)) + c
        if s:
            out[m] = s
        elif m in out:
            del out[m]
    return out


def _poly_neg(a: Poly) -> Poly:
    return {m: -c for m, c in a.items()}


def _poly_scale(a: Poly, k: Fraction) -> Poly:
    if not k:
        return {}
    return {m: c * k for m, c in a.items()}


def _poly_mul(a: Poly, b: Poly) -> Poly:
    out: Poly = {}
    for ma, ca in a.items():
        for mb, cb in b.items():
            m = _mono_mul(ma, mb)
            s = out.get(m, Fraction(0)) + ca * cb
            if s:
                out[m] = s
            elif m in out:
                del out[m]
    return out


def _poly_leading(a: Poly) -> tuple[Mono, Fraction]:
    m = max(a, key=_mono_key)
    return m, a[m]


def _poly_div_exact(num: Poly, den: Poly) -> Poly | None:
    """Exact single-divisor division under the graded order, or None when the
    remainder is nonzero."""
    if not num:
        return {}
    dm, dc = _poly_leading(den)
    quot: Poly = {}
    rem = dict(num)
    # each step strictly lowers the leading monomial, so this terminates
    while rem:
        rm, rc = _poly_leading(rem)
        m = _mono_div(rm, dm)
        if m is None:
            return None
        c = rc / dc
        quot[m] = quot.get(m, Fraction(0)) + c
        rem = _poly_add(rem, {_mono_mul(m, k): -c * v for k, v in den.items()})
    return quot


def _poly_diff(a: Poly, v: str) -> Poly:
    out: Poly = {}
    for m, c in a.items():
        exps = dict(m)
        e = exps.get(v, 0)
        if not e:
            continue
        if e == 1:
            del exps[v]
        else:
            exps[v] = e - 1
        out[tuple(sorted(exps.items()))] = c * e
    return out


def _poly_anti(a: Poly, v: str) -> Poly:
    out: Poly = {}
    for m, c in a.items():
        exps = dict(m)
        e = exps.get(v, 0) + 1
        exps[v] = e
        out[tuple(sorted(exps.items()))] = c / e
    return out


def _fraction_str(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def _poly_str(a: Poly) -> str:
    if not a:
        return "0"
    parts: list[str] = []
    for m in sorted(a, key=_mono_key, reverse=True):
        c = a[m]
        mono = "*".join(name if e == 1 else f"{name}^{e}" for name, e in m)
        mag = abs(c)
        if not mono:
            body = _fraction_str(mag)
        elif mag == 1:
            body = mono
        else:
            body = f"{_fraction_str(mag)}*{mono}"
        if not parts:
            parts.append(body if c > 0 else f"-{body}")
        else:
            parts.append(f" + {body}" if c > 0 else f" - {body}")
    return "".join(parts)


# ---------------------------------------------------------------------------
# Expr
# ---------------------------------------------------------------------------

_ONE_POLY: Poly = {_EMPTY: Fraction(1)}


def _coerce_fraction(value: int | float | Fraction | str) -> Fraction:
    # Fraction(float) is exact on the binary value, which is what we want for
    # numeric boundary data.
    return Fraction(value)


class Expr:
    """Immutable rational expression in canonical form."""

    __slots__ = ("_num", "_den")
    __hash__ = None  # equal unreduced quotients could hash apart

    def __init__(self, num: Poly, den: Poly | None = None, _normalized: bool = False):
        if den is None:
            den = dict(_ONE_POLY)
        if not _normalized:
            num, den = _normalize(num, den)
        object.__setattr__(self, "_num", num)
        object.__setattr__(self, "_den", den)

    def __setattr__(self, *_):  # pragma: no cover - defensive
        raise AttributeError("Expr is immutable")

    # -- constructors -------------------------------------------------------

    @staticmethod
    def const(value: int | float | Fraction | str) -> Expr:
        c = _coerce_fraction(value)
        return Expr({_EMPTY: c} if c else {}, dict(_ONE_POLY), _normalized=True)

    @staticmethod
    def var(name: str) -> Expr:
        if not _IDENT_RE.match(name):
            raise ValueError(f"invalid variable name {name!r}")
        return Expr({((name, 1),): Fraction(1)}, dict(_ONE_POLY), _normalized=True)

    # -- structure ----------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return not self._num

    @property
    def is_constant(self) -> bool:
        return self._den == _ONE_POLY and (not self._num or set(self._num) == {_EMPTY})

    @property
    def is_quotient(self) -> bool:
        return self._den != _ONE_POLY

    def as_fraction(self) -> Fraction:
        if not self.is_constant:
            raise ValueError(f"not a constant: {self}")
        return self._num.get(_EMPTY, Fraction(0))

    def free_names(self) -> frozenset[str]:
        names: set[str] = set()
        for part in (self._num, self._den):
            for m in part:
                names.update(name for name, _ in m)
        return frozenset(names)

    def has_any(self, names: Iterable[str]) -> bool:
        return not self.free_names().isdisjoint(names)

    # -- arithmetic ---------------------------------------------------------

    def _coerced(self, other: Scalar) -> Expr | None:
        if isinstance(other, Expr):
            return other
        if isinstance(other, (int, float, Fraction)):
            return Expr.const(other)
        return None

    def __add__(self, other: Scalar) -> Expr:
        o = self._coerced(other)
        if o is None:
            return NotImplemented
        if self._den == o._den:
            return Expr(_poly_add(self._num, o._num), dict(self._den))
        # prefer the larger denominator when one divides the other
        q = _poly_div_exact(o._den, self._den)
        if q is not None:
            return Expr(_poly_add(_poly_mul(self._num, q), o._num), dict(o._den))
        q = _poly_div_exact(self._den, o._den)
        if q is not None:
            return Expr(_poly_add(self._num, _poly_mul(o._num, q)), dict(self._den))
        num = _poly_add(_poly_mul(self._num, o._den), _poly_mul(o._num, self._den))
        return Expr(num, _poly_mul(self._den, o._den))

    __radd__ = __add__

    def __neg__(self) -> Expr:
        return Expr(_poly_neg(self._num), dict(self._den), _normalized=True)

    def __sub__(self, other: Scalar) -> Expr:
        o = self._coerced(other)
        if o is None:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other: Scalar) -> Expr:
        o = self._coerced(other)
        if o is None:
            return NotImplemented
        return o + (-self)

    def __mul__(self, other: Scalar) -> Expr:
        o = self._coerced(other)
        if o is None:
            return NotImplemented
        return Expr(_poly_mul(self._num, o._num), _poly_mul(self._den, o._den))

    __rmul__ = __mul__

    def __truediv__(self, other: Scalar) -> Expr:
        o = self._coerced(other)
        if o is None:
            return NotImplemented
        if o.is_zero:
            raise ZeroDivisionError("division by zero expression")
        return Expr(_poly_mul(self._num, o._den), _poly_mul(self._den, o._num))

    def __rtruediv__(self, other: Scalar) -> Expr:
        o = self._coerced(other)
        if o is None:
            return NotImplemented
        return o / self

    def __pow__(self, exponent: int) -> Expr:
        if not isinstance(exponent, int):
            raise TypeError("exponent must be an integer")
        if exponent < 0:
            if self.is_zero:
                raise ZeroDivisionError("zero to a negative power")
            return (Expr.const(1) / self) ** (-exponent)
        result = ONE
        base = self
        e = exponent
        while e:
            if e & 1:
                result = result * base
            base = base * base if e > 1 else base
            e >>= 1
        return result

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (int, float, Fraction)):
            other = Expr.const(other)
        if not isinstance(other, Expr):
            return NotImplemented
        if self._den == other._den:
            return self._num == other._num
        return _poly_mul(self._num, other._den) == _poly_mul(other._num, self._den)

    # -- calculus -----------------------------------------------------------

    def diff(self, v: str) -> Expr:
        if self._den == _ONE_POLY:
            return Expr(_poly_diff(self._num, v), dict(_ONE_POLY))
        dn = _poly_diff(self._num, v)
        dd = _poly_diff(self._den, v)
        num = _poly_add(_poly_mul(dn, self._den), _poly_neg(_poly_mul(self._num, dd)))
        return Expr(num, _poly_mul(self._den, self._den))

    def antiderivative(self, v: str) -> Expr:
        """Antiderivative in v with zero constant; v must not occur in the
        denominator."""
        if any(v == name for m in self._den for name, _ in m):
            raise NotPolynomialError(f"cannot integrate in {v!r}: it appears in a denominator")
        return Expr(_poly_anti(self._num, v), dict(self._den))

    def degree(self, v: str) -> int:
        """Degree in v; requires polynomial dependence on v (v must not occur
        in the denominator).  The zero expression has degree 0."""
        if any(v == name for m in self._den for name, _ in m):
            raise NotPolynomialError(f"{self} is not polynomial in {v!r}")
        deg = 0
        for m in self._num:
            for name, e in m:
                if name == v and e > deg:
                    deg = e
        return deg

    def coeff(self, v: str, k: int) -> Expr:
        """Coefficient of v**k, an expression free of v."""
        if any(v == name for m in self._den for name, _ in m):
            raise NotPolynomialError(f"{self} is not polynomial in {v!r}")
        out: Poly = {}
        for m, c in self._num.items():
            exps = dict(m)
            if exps.pop(v, 0) == k:
                out[tuple(sorted(exps.items()))] = c
        return Expr(out, dict(self._den))

    def degree_total(self, names: Iterable[str]) -> int:
        """Combined degree over a set of names (for affine/quadratic tests);
        requires the names to stay out of the denominator."""
        names = set(names)
        if any(name in names for m in self._den for name, _ in m):
            raise NotPolynomialError("non-polynomial dependence")
        deg = 0
        for m in self._num:
            d = sum(e for name, e in m if name in names)
            if d > deg:
                deg = d
        return deg

    # -- substitution and evaluation ----------------------------------------

    def subs(self, mapping: Mapping[str, Scalar]) -> Expr:
        """Simultaneous substitution of variables by expressions."""
        exprs: dict[str, Expr] = {}
        for name, value in mapping.items():
            exprs[name] = value if isinstance(value, Expr) else Expr.const(value)
        num = _subs_poly(self._num, exprs)
        den = _subs_poly(self._den, exprs)
        if den.is_zero:
            raise ZeroDivisionError("substitution produced a zero denominator")
        return num / den

    def even_subs(self, v: str, value: Expr) -> Expr:
        """Substitute v**2 -> value; every occurrence of v must have even
        exponent."""
        def rewrite(part: Poly) -> Expr:
            acc = ZERO
            for m, c in part.items():
                exps = dict(m)
                e = exps.pop(v, 0)
                if e % 2:
                    raise ValueError(f"odd power of {v!r} in {self}")
                term = Expr({tuple(sorted(exps.items())): c}, dict(_ONE_POLY), _normalized=True)
                acc = acc + term * value ** (e // 2)
            return acc

        den = rewrite(self._den)
        if den.is_zero:
            raise ZeroDivisionError("substitution produced a zero denominator")
        return rewrite(self._num) / den

    def eval(self, assignment: Mapping[str, float]) -> float:
        """IEEE-double evaluation; every free name needs a value."""
        missing = self.free_names() - set(assignment)
        if missing:
            raise EvalError(f"missing values for {sorted(missing)}")
        num = _eval_poly(self._num, assignment)
        den = _eval_poly(self._den, assignment)
        if den == 0.0:
            raise EvalError("denominator evaluates to zero")
        return num / den

    # -- display ------------------------------------------------------------

    def __str__(self) -> str:
        if self._den == _ONE_POLY:
            return _poly_str(self._num)
        return f"({_poly_str(self._num)})/({_poly_str(self._den)})"

    def __repr__(self) -> str:
        return f"Expr({str(self)!r})"


def _normalize(num: Poly, den: Poly) -> tuple[Poly, Poly]:
    if not den:
        raise ZeroDivisionError("zero denominator")
    if not num:
        return {}, dict(_ONE_POLY)
    # cancel the common monomial factor
    common: dict[str, int] = {}
    first = True
    for part in (num, den):
        for m in part:
            exps = dict(m)
            if first:
                common = exps
                first = False
            else:
                common = {
                    name: min(e, exps[name]) for name, e in common.items() if name in exps
                }
            if not common:
                break
    if common:
        gcd_mono = tuple(sorted(common.items()))
        num = {_mono_div(m, gcd_mono): c for m, c in num.items()}
        den = {_mono_div(m, gcd_mono): c for m, c in den.items()}
    if den != _ONE_POLY:
        quot = _poly_div_exact(num, den)
        if quot is not None:
            return quot, dict(_ONE_POLY)
    # make the denominator monic under the graded order
    _, lc = _poly_leading(den)
    if lc != 1:
        inv = Fraction(1) / lc
        num = _poly_scale(num, inv)
        den = _poly_scale(den, inv)
    return num, den


def _subs_poly(part: Poly, exprs: Mapping[str, Expr]) -> Expr:
    acc = ZERO
    for m, c in part.items():
        plain: list[tuple[str, int]] = []
        mapped = Expr.const(c)
        for name, e in m:
            if name in exprs:
                mapped = mapped * exprs[name] ** e
            else:
                plain.append((name, e))
        if plain:
            mapped = mapped * Expr({tuple(plain): Fraction(1)}, dict(_ONE_POLY), _normalized=True)
        acc = acc + mapped
    return acc


def _eval_poly(part: Poly, assignment: Mapping[str, float]) -> float:
    total = 0.0
    for m in sorted(part, key=_mono_key):
        c = part[m]
        v = float(c)
        for name, e in m:
            v *= float(assignment[name]) ** e
        total += v
    return total


ZERO = Expr.const(0)
ONE = Expr.const(1)


# ---------------------------------------------------------------------------
# variable space
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VarSpace:
    """Declares the variables a problem is written in: one time variable,
    ordered states and controls, the scalar transformation parameter, and any
    free coefficient symbols (boundary data, unknowns)."""

    states: tuple[str, ...]
    controls: tuple[str, ...]
    time: str = "t"
    parameter: str = "s"
    coefficients: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "controls", tuple(self.controls))
        object.__setattr__(self, "coefficients", frozenset(self.coefficients))
        if not self.states:
            raise ValueError("at least one state is required")
        if not self.controls:
            raise ValueError("at least one control is required")
        pooled = [self.time, self.parameter, *self.states, *self.controls, *sorted(self.coefficients)]
        for name in pooled:
            if not _IDENT_RE.match(name):
                raise ValueError(f"invalid identifier {name!r}")
        if len(set(pooled)) != len(pooled):
            raise ValueError(f"variable names must be distinct: {pooled}")

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def m(self) -> int:
        return len(self.controls)

    def all_names(self) -> frozenset[str]:
        return frozenset((self.time, self.parameter, *self.states, *self.controls, *self.coefficients))

    def with_coefficients(self, *names: str) -> VarSpace:
        return VarSpace(
            states=self.states,
            controls=self.controls,
            time=self.time,
            parameter=self.parameter,
            coefficients=self.coefficients | set(names),
        )


def total_derivative(e: Expr, space: VarSpace, dynamics: Sequence[Expr]) -> Expr:
    """Derivative of e(t, x) along trajectories of x' = dynamics(t, x, u).

    The argument must not depend on controls: their time derivative is not
    defined by the control system.
    """
    if len(dynamics) != space.n:
        raise ValueError("one dynamics expression per state is required")
    bad = e.free_names() & set(space.controls)
    if bad:
        raise ValueError(f"total derivative undefined: argument depends on controls {sorted(bad)}")
    out = e.diff(space.time)
    for name, rhs in zip(space.states, dynamics):
        out = out + e.diff(name) * rhs
    return out


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>\d+\.\d+|\.\d+|\d+)|(?P<name>[A-Za-z][A-Za-z0-9_]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens: list[tuple[str, str, int]] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos:].strip():
                raise ParseError(f"unexpected character {text[pos:].lstrip()[0]!r}", pos)
            break
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, space: VarSpace):
        self.tokens = _tokenize(text)
        self.space = space
        self.known = space.all_names()
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def advance(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def parse(self) -> Expr:
        e = self.expr()
        kind, value, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {value!r}", pos)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.advance()
                rhs = self.term()
                e = e + rhs if value == "+" else e - rhs
            else:
                return e

    def term(self) -> Expr:
        e = self.factor()
        while True:
            kind, value, pos = self.peek()
            if kind == "op" and value in "*/":
                self.advance()
                rhs = self.factor()
                if value == "*":
                    e = e * rhs
                else:
                    if rhs.is_zero:
                        raise ParseError("division by zero", pos)
                    e = e / rhs
            else:
                return e

    def factor(self) -> Expr:
        e = self.base()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.advance()
            kind, value, pos = self.peek()
            if kind != "number" or "." in value:
                raise ParseError("integer exponent expected after '^'", pos)
            self.advance()
            e = e ** int(value)
        return e

    def base(self) -> Expr:
        kind, value, pos = self.advance()
        if kind == "number":
            return Expr.const(Fraction(value))
        if kind == "name":
            if value not in self.known:
                raise ParseError(f"unknown identifier {value!r}", pos)
            return Expr.var(value)
        if kind == "op" and value == "(":
            e = self.expr()
            kind, value, pos = self.advance()
            if not (kind == "op" and value == ")"):
                raise ParseError("expected ')'", pos)
            return e
        if kind == "op" and value == "-":
            return -self.factor()
        raise ParseError(f"unexpected token {value!r}" if value else "unexpected end of input", pos)


def parse(text: str, space: VarSpace) -> Expr:
    """Parse an expression in the grammar

        expr   := term (('+'|'-') term)*
        term   := factor (('*'|'/') factor)*
        factor := base ('^' integer)?
        base   := number | identifier | '(' expr ')' | '-' factor

    Numbers are exact rationals; identifiers must be declared in ``space``.
    ``str(parse(s, space))`` round-trips canonically.
    """
    return _Parser(text, space).parse()
