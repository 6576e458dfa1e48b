"""Global solver via trivializing parameter families.

Given a verified shift symmetry h^s of a problem whose boundary data the
family can push around, the route is: generalize the pins through x^s, pick
the parameter value s* that makes the trivial control feasible for the
generalized problem, and map the trivial trajectory back through the inverse
shift.  A pointwise-minimality certificate upgrades the result from
stationary candidate to certified global minimizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import root as _scipy_root

from .errors import NonlinearIdentityError, SolverError, UnsupportedError
from .expr import Expr, NotPolynomialError, VarSpace, ZERO
from .linsolve import identity_to_linear_system, solve_linear
from .problem import BoundaryPin, ProblemSpec, Samples, Solution, cost_of, exact_cost
from .symmetry import TransformFamily, check_invariance, synthesize_gauge

__all__ = [
    "GeneralizedProblem",
    "ParameterRoot",
    "ParameterFit",
    "generalize",
    "fit_parameter",
    "certify_trivial",
    "solve",
]


@dataclass(frozen=True)
class GeneralizedProblem:
    """The base problem with every pin pushed through the family: a pin
    x_i(tau) = v becomes x^s_i(tau) = v + g_i(tau, s)."""

    base: ProblemSpec
    family: TransformFamily
    pins: tuple[BoundaryPin, ...]


def generalize(p: ProblemSpec, f: TransformFamily) -> GeneralizedProblem:
    """Push the boundary pins through the family.

    The family must be in shift form with a verified invariance report;
    non-symmetries are rejected so downstream global claims stay sound.
    """
    if not f.is_shift:
        raise UnsupportedError("generalization needs a shift-form family")
    report = check_invariance(p, f)
    if not report.verdict:
        raise SolverError(
            "family is not a variational symmetry of the problem:\n" + report.to_text()
        )
    sp = p.space
    shifts = f.state_shifts()
    pins = []
    for pin in p.boundary:
        tau = p.endpoint_expr(pin.endpoint)
        shift_at = shifts[pin.state].subs({sp.time: tau})
        pins.append(BoundaryPin(pin.endpoint, pin.state, pin.value + shift_at))
    return GeneralizedProblem(base=p, family=f, pins=tuple(pins))


# ---------------------------------------------------------------------------
# parameter fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParameterRoot:
    """One trivializing parameter value.

    ``s_expr`` is the exact root when the compatibility polynomial is linear
    in s; for even polynomials the pair +/-sqrt(s_squared) is kept exactly in
    ``s_squared`` with ``sign`` picking the branch.  ``value`` is the float
    image when the boundary data is numeric.  ``constants`` are the solved
    integration constants of the trivial trajectory (symbolic path), and
    ``free_inits`` the solved free initial states (numeric path).
    """

    sign: int
    value: float | None
    s_expr: Expr | None = None
    s_squared: Expr | None = None
    constants: tuple[Expr, ...] | None = None
    free_inits: tuple[float, ...] | None = None


@dataclass(frozen=True)
class ParameterFit:
    mode: str  # "symbolic" | "numeric"
    trivial_control: tuple[Expr, ...]
    roots: tuple[ParameterRoot, ...]
    mismatch: tuple[Expr, ...]  # compatibility expressions in s (symbolic mode)
    constant_names: tuple[str, ...]
    constants_general: tuple[Expr, ...]  # integration constants as functions of s
    states_general: tuple[Expr, ...]  # trivial trajectory with free constants
    details: dict = field(default_factory=dict)


def _default_trivial(sp: VarSpace, u_triv: Sequence[Expr] | None) -> tuple[Expr, ...]:
    if u_triv is None:
        return tuple(ZERO for _ in sp.controls)
    u_triv = tuple(u_triv)
    if len(u_triv) != sp.m:
        raise ValueError(f"{sp.m} trivial controls required, got {len(u_triv)}")
    bad_names = set(sp.states) | set(sp.controls) | {sp.parameter}
    for e in u_triv:
        if e.has_any(bad_names):
            raise UnsupportedError("trivial control must be a function of time only")
    return u_triv


def _fresh_names(base: str, count: int, taken: set[str]) -> list[str]:
    names = []
    for i in range(1, count + 1):
        name = f"{base}{i}"
        while name in taken:
            name = "_" + name
        taken.add(name)
        names.append(name)
    return names


def _integrate_trivial(
    p: ProblemSpec, u_triv: tuple[Expr, ...], const_names: list[str]
) -> tuple[Expr, ...] | None:
    """Closed-form trajectory of dx/dt = phi(t, x, u_triv(t)) by triangular
    substitution, one fresh constant per state; None when the system is not
    triangular (self-coupling or non-polynomial integrands)."""
    sp = p.space
    phihat = [d.subs(dict(zip(sp.controls, u_triv))) for d in p.dynamics]
    solved: dict[int, Expr] = {}
    remaining = set(range(sp.n))
    while remaining:
        progress = False
        for i in sorted(remaining):
            deps = phihat[i].free_names() & set(sp.states)
            if sp.states[i] in deps:
                continue
            dep_idx = [sp.states.index(nm) for nm in deps]
            if any(j not in solved for j in dep_idx):
                continue
            body = phihat[i].subs({sp.states[j]: solved[j] for j in dep_idx})
            try:
                integral = body.antiderivative(sp.time)
            except NotPolynomialError:
                return None
            solved[i] = Expr.var(const_names[i]) + integral
            remaining.discard(i)
            progress = True
        if not progress:
            return None
    return tuple(solved[i] for i in range(sp.n))


def _pin_equations(
    g: GeneralizedProblem, states_general: tuple[Expr, ...]
) -> list[Expr]:
    sp = g.base.space
    eqs = []
    for pin in g.pins:
        tau = g.base.endpoint_expr(pin.endpoint)
        eqs.append(states_general[pin.state].subs({sp.time: tau}) - pin.value)
    return eqs


def _numerator_poly_in(e: Expr, v: str) -> list[Expr]:
    """Coefficients [c_0, ..., c_d] of the numerator of e as a polynomial in
    v; e vanishes exactly where that polynomial does (denominator nonzero)."""
    num = Expr(dict(e._num))  # noqa: SLF001
    if any(v == name for mono in e._den for name, _ in mono):  # noqa: SLF001
        raise UnsupportedError(f"compatibility expression is not polynomial in {v}: {e}")
    d = num.degree(v)
    return [num.coeff(v, k) for k in range(d + 1)]


def _scan_roots(
    coeffs: list[float], lo: float, hi: float, points: int
) -> list[float]:
    """Real roots by sign-change scan plus bisection refined to ~1e-12."""

    def poly(v: float) -> float:
        acc = 0.0
        for c in reversed(coeffs):
            acc = acc * v + c
        return acc

    grid = np.linspace(lo, hi, points)
    vals = [poly(v) for v in grid]
    roots: list[float] = []
    for k in range(len(grid) - 1):
        va, vb = vals[k], vals[k + 1]
        if va == 0.0:
            roots.append(float(grid[k]))
            continue
        if va * vb < 0.0:
            a_, b_ = float(grid[k]), float(grid[k + 1])
            fa = va
            for _ in range(200):
                mid = 0.5 * (a_ + b_)
                fm = poly(mid)
                if fm == 0.0 or (b_ - a_) < 1e-13:
                    a_ = b_ = mid
                    break
                if fa * fm < 0.0:
                    b_ = mid
                else:
                    a_, fa = mid, fm
            roots.append(0.5 * (a_ + b_))
    if vals and vals[-1] == 0.0:
        roots.append(float(grid[-1]))
    dedup: list[float] = []
    for r in roots:
        if all(abs(r - q) > 1e-10 for q in dedup):
            dedup.append(r)
    return dedup


def fit_parameter(
    g: GeneralizedProblem,
    u_triv: Sequence[Expr] | None = None,
    scan: tuple[float, float] = (-100.0, 100.0),
    scan_points: int = 10_000,
    force_numeric: bool = False,
) -> ParameterFit:
    """Find every parameter value for which the trivial control is feasible.

    Symbolic path: integrate the trivialized dynamics in closed form with one
    unknown constant per state, impose the generalized pins as a linear
    system in the constants, and read the leftover compatibility rows as a
    polynomial in s.  Linear and even-quadratic polynomials are solved
    exactly (the even case keeps s^2 exact and returns the +/- pair); numeric
    boundary data otherwise goes through a sign-change scan with bisection.
    A non-triangular system falls back to numeric shooting.
    """
    p = g.base
    sp = p.space
    u_triv = _default_trivial(sp, u_triv)
    taken = set(sp.all_names())
    const_names = _fresh_names("C", sp.n, taken)

    states_general = None
    if not force_numeric:
        states_general = _integrate_trivial(p, u_triv, const_names)
    if states_general is None:
        return _fit_numeric(g, u_triv, scan, const_names)

    eqs = _pin_equations(g, states_general)
    rows: list[list[Expr]] = []
    rhs: list[Expr] = []
    try:
        for eq in eqs:
            r, b, _ = identity_to_linear_system(eq, const_names, [])
            rows += r
            rhs += b
    except NonlinearIdentityError:
        return _fit_numeric(g, u_triv, scan, const_names)
    lin = solve_linear(rows, rhs)
    mismatch = tuple(m for m in lin.leftovers if not m.is_zero)
    if not mismatch:
        raise SolverError(
            "boundary data does not determine the parameter (every scan value "
            "is feasible or the pins are rank-deficient); nothing to fit"
        )
    roots = _roots_from_mismatch(mismatch, sp.parameter, scan, scan_points)

    out_roots = []
    for r in roots:
        consts = tuple(_subs_root(c, sp.parameter, r) for c in lin.particular)
        out_roots.append(
            ParameterRoot(
                sign=r.sign,
                value=r.value,
                s_expr=r.s_expr,
                s_squared=r.s_squared,
                constants=consts,
            )
        )
    return ParameterFit(
        mode="symbolic",
        trivial_control=u_triv,
        roots=tuple(out_roots),
        mismatch=mismatch,
        constant_names=tuple(const_names),
        constants_general=tuple(lin.particular),
        states_general=states_general,
        details={"scan": scan},
    )


def _roots_from_mismatch(
    mismatch: tuple[Expr, ...],
    s_name: str,
    scan: tuple[float, float],
    scan_points: int,
) -> list[ParameterRoot]:
    coeff_lists = [_numerator_poly_in(m, s_name) for m in mismatch]
    primary = max(coeff_lists, key=len)
    d = len(primary) - 1
    numeric = all(c.is_constant for cs in coeff_lists for c in cs)
    even = all(c.is_zero for k, c in enumerate(primary) if k % 2 == 1)

    roots: list[ParameterRoot]
    if d == 0:
        raise SolverError(
            f"no trivializing parameter exists: compatibility condition "
            f"{primary[0]} = 0 has no solution"
        )
    if even and d == 2 and not primary[2].is_zero:
        sigma = -primary[0] / primary[2]
        if sigma.is_constant:
            sig = sigma.as_fraction()
            if sig < 0:
                raise SolverError(
                    f"no real trivializing parameter: the squared parameter "
                    f"solves to {sigma}"
                )
            if sig == 0:
                roots = [ParameterRoot(sign=1, value=0.0, s_squared=sigma)]
            else:
                v = math.sqrt(float(sig))
                roots = [
                    ParameterRoot(sign=1, value=v, s_squared=sigma),
                    ParameterRoot(sign=-1, value=-v, s_squared=sigma),
                ]
        else:
            roots = [
                ParameterRoot(sign=1, value=None, s_squared=sigma),
                ParameterRoot(sign=-1, value=None, s_squared=sigma),
            ]
    elif d == 1:
        s_star = -primary[0] / primary[1]
        value = float(s_star.as_fraction()) if s_star.is_constant else None
        roots = [ParameterRoot(sign=1, value=value, s_expr=s_star)]
    elif numeric:
        floats = [float(c.as_fraction()) for c in primary]
        found = _scan_roots(floats, scan[0], scan[1], scan_points)
        if not found:
            raise SolverError(
                f"no trivializing parameter found by the sign-change scan on "
                f"[{scan[0]}, {scan[1]}]"
            )
        roots = [ParameterRoot(sign=1, value=v) for v in found]
    else:
        raise UnsupportedError(
            f"compatibility polynomial has degree {d} with symbolic "
            f"coefficients; only linear and even-quadratic cases solve exactly"
        )

    # every compatibility expression must vanish at every root
    for r in roots:
        for cs in coeff_lists:
            residual = _mismatch_value(cs, r)
            if residual is None:
                continue
            scale = max(1.0, *(abs(x) for x in residual[1])) if residual[1] else 1.0
            if abs(residual[0]) > 1e-8 * scale:
                raise SolverError(
                    "generalized pins are jointly incompatible: a parameter "
                    "root of one compatibility condition violates another"
                )
    return roots


def _mismatch_value(
    coeffs: list[Expr], r: ParameterRoot
) -> tuple[float, list[float]] | None:
    if r.value is None or not all(c.is_constant for c in coeffs):
        return None
    floats = [float(c.as_fraction()) for c in coeffs]
    acc = 0.0
    for c in reversed(floats):
        acc = acc * r.value + c
    return acc, floats


def _subs_root(e: Expr, s_name: str, r: ParameterRoot) -> Expr:
    """Substitute one parameter root into an expression, exactly when the
    root is exact."""
    if r.s_expr is not None:
        return e.subs({s_name: r.s_expr})
    if r.s_squared is not None:
        try:
            return e.even_subs(s_name, r.s_squared)
        except ValueError:
            if r.value is None:
                raise UnsupportedError(
                    "expression is odd in the parameter; the irrational root "
                    "pair cannot be substituted exactly with symbolic data"
                ) from None
            return e.subs({s_name: Expr.const(Fraction(r.value))})
    if r.value is None:
        raise SolverError("root carries no usable parameter value")
    return e.subs({s_name: Expr.const(Fraction(r.value))})


# ---------------------------------------------------------------------------
# numeric fallback
# ---------------------------------------------------------------------------


def _rhs_callable(p: ProblemSpec, u_triv: tuple[Expr, ...]) -> Callable:
    sp = p.space
    phihat = [d.subs(dict(zip(sp.controls, u_triv))) for d in p.dynamics]

    def rhs(t: float, x: np.ndarray) -> list[float]:
        env = {sp.time: float(t)}
        env.update({nm: float(v) for nm, v in zip(sp.states, x)})
        return [e.eval(env) for e in phihat]

    return rhs


def _fit_numeric(
    g: GeneralizedProblem,
    u_triv: tuple[Expr, ...],
    scan: tuple[float, float],
    const_names: list[str],
) -> ParameterFit:
    """Shooting on the stacked mismatch in (s, free initial states)."""
    p = g.base
    sp = p.space
    if not p.is_numeric:
        raise UnsupportedError(
            "numeric parameter fitting needs numeric horizon and pins; the "
            "trivialized dynamics did not integrate in closed form"
        )
    a, b = p.horizon_floats()
    s_name = sp.parameter
    start_pins = {pin.state: pin.value for pin in g.pins if pin.endpoint == "t0"}
    end_pins = [(pin.state, pin.value) for pin in g.pins if pin.endpoint == "t1"]
    free = [i for i in range(sp.n) if i not in start_pins]
    if len(end_pins) != len(free) + 1:
        raise SolverError(
            f"shooting needs a square system: {len(free) + 1} unknowns "
            f"(parameter + free initial states) vs {len(end_pins)} final pins"
        )
    rhs = _rhs_callable(p, u_triv)

    def mismatch(theta: np.ndarray) -> np.ndarray:
        s_val = float(theta[0])
        x0 = np.zeros(sp.n)
        for i, v in start_pins.items():
            x0[i] = v.eval({s_name: s_val})
        for slot, i in enumerate(free):
            x0[i] = theta[1 + slot]
        sol = solve_ivp(rhs, (a, b), x0, rtol=1e-12, atol=1e-12, dense_output=True)
        if not sol.success:
            return np.full(len(end_pins), 1e6)
        xb = sol.y[:, -1]
        return np.array([xb[i] - v.eval({s_name: s_val}) for i, v in end_pins])

    found: list[tuple[float, tuple[float, ...]]] = []
    for s0 in np.linspace(scan[0], scan[1], 21):
        theta0 = np.zeros(1 + len(free))
        theta0[0] = s0
        res = _scipy_root(mismatch, theta0, method="hybr", tol=1e-12)
        if not res.success:
            continue
        if np.max(np.abs(mismatch(res.x))) > 1e-9:
            continue
        s_val = float(res.x[0])
        if all(abs(s_val - q[0]) > 1e-8 for q in found):
            found.append((s_val, tuple(float(v) for v in res.x[1:])))
    if not found:
        raise SolverError(
            f"no trivializing parameter found by shooting on [{scan[0]}, {scan[1]}]"
        )
    found.sort(key=lambda q: q[0])
    roots = tuple(
        ParameterRoot(sign=1, value=s_val, free_inits=inits) for s_val, inits in found
    )
    return ParameterFit(
        mode="numeric",
        trivial_control=u_triv,
        roots=roots,
        mismatch=(),
        constant_names=tuple(const_names),
        constants_general=(),
        states_general=(),
        details={"scan": scan, "starts": 21},
    )


# ---------------------------------------------------------------------------
# certificate
# ---------------------------------------------------------------------------


def _certificate(p: ProblemSpec, u_triv: tuple[Expr, ...]) -> tuple[str, str]:
    """Pointwise-minimality test: rewrite L in w = u - u_triv and demand a
    sum of even powers of w with coefficients that stay nonnegative for all
    (t, x), plus at most trajectory-independent terms in t alone.  The test
    is conservative: failure demotes, never rejects."""
    sp = p.space
    taken = set(sp.all_names())
    w_names = _fresh_names("w", sp.m, taken)
    binding = {
        u: Expr.var(w) + triv for u, w, triv in zip(sp.controls, w_names, u_triv)
    }
    rewritten = p.lagrangian.subs(binding)
    den_names = {nm for mono in rewritten._den for nm, _ in mono}  # noqa: SLF001
    if den_names & (set(w_names) | set(sp.states)):
        return "candidate", "running cost keeps states or controls in a denominator"
    for mono, c in rewritten._num.items():  # noqa: SLF001
        exps = dict(mono)
        w_deg = sum(exps.get(w, 0) for w in w_names)
        state_deg = sum(exps.get(x, 0) for x in sp.states)
        if w_deg == 0:
            if state_deg > 0:
                return (
                    "candidate",
                    f"state-dependent term {Expr({mono: c})} survives at the "
                    "trivial control, defeating the pointwise argument",
                )
            continue  # function of t (and fixed coefficients) alone
        if any(exps.get(w, 0) % 2 for w in w_names):
            return (
                "candidate",
                f"odd power of the shifted control in {Expr({mono: c})}",
            )
        rest_odd = any(k % 2 for nm, k in exps.items() if nm not in w_names)
        if c < 0 or rest_odd:
            return (
                "candidate",
                f"coefficient of {Expr({mono: c})} is not a nonnegative "
                "constant or an even power",
            )
    return "certified-global", "running cost is a sum of even powers of the shifted control"


def certify_trivial(p: ProblemSpec, u_triv: Sequence[Expr] | None = None) -> str:
    """Status of the trivial control as a pointwise minimizer of the running
    cost: "certified-global" or "candidate"."""
    status, _ = _certificate(p, _default_trivial(p.space, u_triv))
    return status


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def _gauge_pins_ok(p: ProblemSpec, gauge: Expr) -> bool:
    """The gauge contributes a boundary term Phi(t1, x(t1)) - Phi(t0, x(t0))
    to the transformed cost; that term is data-determined only when every
    state the gauge touches is pinned at both endpoints.  Otherwise the
    certificate transfers to a constrained subfamily and the global claim
    must be dropped."""
    touched = gauge.free_names() & set(p.space.states)
    pinned = {p.space.states[i] for i in p.pinned_at_both()}
    return touched <= pinned


def solve(
    p: ProblemSpec,
    f: TransformFamily,
    u_triv: Sequence[Expr] | None = None,
    scan: tuple[float, float] = (-100.0, 100.0),
    scan_points: int = 10_000,
    mesh: int = 200,
    force_numeric: bool = False,
) -> list[Solution]:
    """Solve by trivializing parameter: one Solution per parameter root.

    Closed forms when the trivialized dynamics integrate symbolically,
    sampled trajectories from the shooting fallback otherwise.  The status
    is "certified-global" only when the pointwise certificate holds and the
    gauge's boundary term is fully determined by the pins.
    """
    sp = p.space
    if f.gauge is None:
        f = f.with_gauge(synthesize_gauge(p, f))
    g = generalize(p, f)
    fit = fit_parameter(g, u_triv, scan=scan, scan_points=scan_points, force_numeric=force_numeric)
    status, reason = _certificate(p, fit.trivial_control)
    gauge_ok = _gauge_pins_ok(p, f.gauge)
    if status == "certified-global" and not gauge_ok:
        status = "candidate"
        reason = (
            "certificate holds only against trajectories matching the "
            "unpinned boundary values that enter the gauge term"
        )
    state_shifts = f.state_shifts()
    control_shifts = f.control_shifts()

    solutions = []
    for r in fit.roots:
        diag = {
            "parameter": r.value if r.value is not None else _root_repr(r),
            "certificate": reason,
            "fit_mode": fit.mode,
        }
        if r.s_squared is not None:
            diag["parameter_squared"] = (
                float(r.s_squared.as_fraction())
                if r.s_squared.is_constant
                else str(r.s_squared)
            )
        if fit.mode == "symbolic":
            binding = dict(zip(fit.constant_names, r.constants))
            states = tuple(
                e.subs(binding) - _subs_root(gshift, sp.parameter, r)
                for e, gshift in zip(fit.states_general, state_shifts)
            )
            controls = tuple(
                triv - _subs_root(d, sp.parameter, r)
                for triv, d in zip(fit.trivial_control, control_shifts)
            )
            sol = Solution(
                status=status,
                method="noether",
                cost=exact_cost(p, states, controls),
                states=states,
                controls=controls,
                diagnostics=diag,
            )
        else:
            sol = _numeric_solution(p, g, fit, r, mesh, status, diag)
        solutions.append(sol)
    return solutions


def _root_repr(r: ParameterRoot) -> str:
    if r.s_expr is not None:
        return str(r.s_expr)
    if r.s_squared is not None:
        sign = "+" if r.sign > 0 else "-"
        return f"{sign}sqrt({r.s_squared})"
    return "?"


def _numeric_solution(
    p: ProblemSpec,
    g: GeneralizedProblem,
    fit: ParameterFit,
    r: ParameterRoot,
    mesh: int,
    status: str,
    diag: dict,
) -> Solution:
    sp = p.space
    f = g.family
    a, b = p.horizon_floats()
    s_val = r.value
    start_pins = {pin.state: pin.value for pin in g.pins if pin.endpoint == "t0"}
    x0 = np.zeros(sp.n)
    free = [i for i in range(sp.n) if i not in start_pins]
    for i, v in start_pins.items():
        x0[i] = v.eval({sp.parameter: s_val})
    for slot, i in enumerate(free):
        x0[i] = r.free_inits[slot]
    rhs = _rhs_callable(p, fit.trivial_control)
    times = np.linspace(a, b, mesh + 1)
    ivp = solve_ivp(rhs, (a, b), x0, t_eval=times, rtol=1e-12, atol=1e-12)
    if not ivp.success:
        raise SolverError("trivial trajectory integration failed at the fitted root")
    shifts = f.state_shifts()
    d_shifts = f.control_shifts()
    states = np.empty((mesh + 1, sp.n))
    for k, tk in enumerate(times):
        env = {sp.time: float(tk), sp.parameter: s_val}
        for i in range(sp.n):
            states[k, i] = ivp.y[i, k] - shifts[i].eval(env)
    controls = np.empty((mesh, sp.m))
    for k in range(mesh):
        tm = 0.5 * (times[k] + times[k + 1])
        env = {sp.time: float(tm), sp.parameter: s_val}
        for j in range(sp.m):
            controls[k, j] = fit.trivial_control[j].eval(env) - d_shifts[j].eval(env)
    samples = Samples(times=times, states=states, controls=controls)
    sol = Solution(
        status=status,
        method="noether",
        cost=0.0,
        samples=samples,
        diagnostics=diag,
    )
    return Solution(
        status=status,
        method="noether",
        cost=cost_of(p, sol, mesh=mesh),
        samples=samples,
        diagnostics=diag,
    )
