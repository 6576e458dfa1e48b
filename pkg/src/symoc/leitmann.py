"""Coordinate-transformation route for velocity-quadratic scalar problems.

For L quadratic in the velocity slot and dynamics x' = u, a change of
variables x = sign*x_tilde + f(t) with polynomial f transfers the problem to
one with zero boundary values.  The transfer is legitimate when the
Lagrangian difference is a total derivative: writing

    Delta(t, x, u) = L(t, sign*x + f, sign*u + f') - L(t, x, u)
                   = A(t, x) + B(t, x) * u,

exactness dB/dt = dA/dx makes Delta = dG/dt for a potential G with
G_x = B, G_t = A.  The exactness identity pins down f's coefficients; the
pinned-zero trivialized problem is then handled by the same pointwise
certificate as the parameter route, and the minimizer maps back as x* = f.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import NonlinearIdentityError, SolverError, UnsupportedError
from .expr import Expr, ZERO
from .linsolve import identity_to_linear_system, solve_linear
from .noether import _certificate, _fresh_names
from .problem import ProblemSpec, Solution, exact_cost

__all__ = [
    "LeitmannTransform",
    "find_transform",
    "leitmann_solve",
    "check_functional_identity",
]


@dataclass(frozen=True)
class LeitmannTransform:
    """The solved change of variables x = sign*x_tilde + f(t) with its
    potential G(t, x_tilde), normalized to zero additive constant."""

    sign: int
    f: Expr
    gauge: Expr


def _structure(p: ProblemSpec) -> tuple[str, str, Expr, Expr, Expr]:
    """Validate the fundamental form and split L = a(t)u^2 + b(t,x)u + c(t,x)."""
    sp = p.space
    if sp.n != 1 or sp.m != 1:
        raise UnsupportedError(
            f"coordinate-transformation route needs one state and one control, "
            f"got {sp.n} states and {sp.m} controls"
        )
    x, u = sp.states[0], sp.controls[0]
    if p.dynamics[0] != Expr.var(u):
        raise UnsupportedError(
            f"dynamics must be d{x}/dt = {u}; got d{x}/dt = {p.dynamics[0]}"
        )
    if p.lagrangian.degree(u) != 2:
        raise UnsupportedError(
            "running cost must be quadratic in the control (velocity) slot"
        )
    a = p.lagrangian.coeff(u, 2)
    if a.has_any([x]):
        raise UnsupportedError(
            "quadratic velocity coefficient must be a function of time only"
        )
    _check_nonvanishing(p, a)
    return x, u, a, p.lagrangian.coeff(u, 1), p.lagrangian.coeff(u, 0)


def _check_nonvanishing(p: ProblemSpec, a: Expr) -> None:
    sp = p.space
    if a.is_constant:
        if a.as_fraction() == 0:
            raise SolverError("quadratic velocity coefficient is identically zero")
        return
    if a.free_names() - {sp.time} or not all(e.is_constant for e in p.horizon):
        raise UnsupportedError(
            "cannot verify a nonvanishing velocity coefficient with symbolic data"
        )
    ta, tb = p.horizon_floats()
    for k in range(101):
        tj = ta + k * (tb - ta) / 100
        if abs(a.eval({sp.time: tj})) < 1e-12:
            raise SolverError(
                f"quadratic velocity coefficient vanishes near t = {tj:.6g}"
            )


def _endpoint_values(p: ProblemSpec) -> tuple[Expr, Expr]:
    lo, hi = p.pins_at("t0"), p.pins_at("t1")
    if 0 not in lo or 0 not in hi:
        raise UnsupportedError(
            "the state must be pinned at both endpoints for this route"
        )
    return lo[0], hi[0]


def _attempt(
    p: ProblemSpec, sign: int, degree: int
) -> tuple[LeitmannTransform, str]:
    sp = p.space
    x, u = sp.states[0], sp.controls[0]
    t = Expr.var(sp.time)
    alpha, beta = _endpoint_values(p)
    taken = set(sp.all_names())
    c_names = _fresh_names("c", degree + 1, taken)
    f = ZERO
    for k, name in enumerate(c_names):
        f = f + Expr.var(name) * t**k
    fp = f.diff(sp.time)

    sgn = Expr.const(sign)
    delta = p.lagrangian.subs({x: sgn * Expr.var(x) + f, u: sgn * Expr.var(u) + fp})
    delta = delta - p.lagrangian
    if delta.degree(u) > 1:
        raise UnsupportedError(
            "transformed difference is superlinear in the velocity slot; the "
            "shift class does not apply"
        )
    B = delta.coeff(u, 1)
    A = delta.coeff(u, 0)
    exactness = B.diff(sp.time) - A.diff(x)

    try:
        rows, rhs, _ = identity_to_linear_system(exactness, c_names, [sp.time, x])
    except NonlinearIdentityError as exc:
        raise UnsupportedError(
            "exactness condition is nonlinear in the transform coefficients "
            f"(state-coupled running cost): {exc}"
        ) from exc
    for tau, value in ((p.horizon[0], alpha), (p.horizon[1], beta)):
        f_at = f.subs({sp.time: tau})
        rows.append([f_at.coeff(name, 1) for name in c_names])
        rhs.append(value - f_at.subs({name: ZERO for name in c_names}))
    lin = solve_linear(rows, rhs)
    if not lin.consistent:
        raise SolverError(
            f"no degree-{degree} transform satisfies exactness plus the "
            f"boundary values with sign {sign:+d}"
        )

    binding = dict(zip(c_names, lin.particular))
    f_star = f.subs(binding)
    B_star = B.subs(binding)
    A_star = A.subs(binding)
    anti = B_star.antiderivative(x)
    h_rate = A_star - anti.diff(sp.time)
    if h_rate.has_any([x]):
        raise SolverError(
            "potential reconstruction failed: mixed term is state-dependent "
            "after exactness"
        )
    gauge = anti + h_rate.antiderivative(sp.time)

    trace = "\n".join(
        [
            f"transform: {x} = {sign:+d}*{x}~ + f(t), degree {degree}",
            f"difference: {delta}",
            f"B (velocity coefficient) = {B}",
            f"A (drift term) = {A}",
            f"exactness residual dB/dt - dA/d{x} = {exactness}",
            f"solved f = {f_star}",
            f"potential G = {gauge}",
        ]
    )
    return LeitmannTransform(sign=sign, f=f_star, gauge=gauge), trace


def _search(p: ProblemSpec, f_degree: int) -> tuple[LeitmannTransform, str]:
    if f_degree < 0:
        raise ValueError("f_degree must be nonnegative")
    _structure(p)
    errors: list[str] = []
    for sign in (1, -1):
        for degree in range(f_degree, max(f_degree, 3) + 1):
            try:
                return _attempt(p, sign, degree)
            except SolverError as exc:
                errors.append(str(exc))
    raise SolverError(
        "no polynomial transform found up to degree "
        f"{max(f_degree, 3)} with either sign; increase f_degree. Tried: "
        + "; ".join(errors[-2:])
    )


def find_transform(p: ProblemSpec, f_degree: int = 1) -> LeitmannTransform:
    """The admissible change of variables alone, without solving."""
    return _search(p, f_degree)[0]


def leitmann_solve(p: ProblemSpec, f_degree: int = 1) -> Solution:
    """Solve a velocity-quadratic scalar problem by polynomial coordinate
    shift; the degree escalates to 3 and the mirrored sign is tried before
    giving up."""
    tr, trace = _search(p, f_degree)
    sp = p.space
    status, reason = _certificate(p, (ZERO,))
    x_star = tr.f
    u_star = tr.f.diff(sp.time)
    ok, residual = check_functional_identity(p, tr)
    if not ok:  # pragma: no cover - construction guarantees exactness
        raise SolverError(f"functional identity failed to verify: residual {residual}")
    return Solution(
        status=status,
        method="leitmann",
        cost=exact_cost(p, (x_star,), (u_star,)),
        states=(x_star,),
        controls=(u_star,),
        diagnostics={
            "sign": tr.sign,
            "f": str(tr.f),
            "gauge": str(tr.gauge),
            "certificate": reason,
            "trace": trace,
        },
    )


def check_functional_identity(
    p: ProblemSpec, tr: LeitmannTransform
) -> tuple[bool, Expr]:
    """Canonical check that the transform's Lagrangian difference equals the
    total derivative of its potential; returns (verdict, residual)."""
    sp = p.space
    x, u = sp.states[0], sp.controls[0]
    sgn = Expr.const(tr.sign)
    fp = tr.f.diff(sp.time)
    delta = p.lagrangian.subs(
        {x: sgn * Expr.var(x) + tr.f, u: sgn * Expr.var(u) + fp}
    ) - p.lagrangian
    rate = tr.gauge.diff(sp.time) + tr.gauge.diff(x) * Expr.var(u)
    residual = delta - rate
    return residual.is_zero, residual
