"""Parameter families of transformations and variational invariance.

A family h^s maps (t, x, u) -> (t^s, x^s, u^s) with h^0 the identity.  It
is a variational symmetry of a problem when, along every admissible pair,

    L(h^s) * d(t^s)/dt = L + d(Phi^s)/dt          (gauge Phi^s)
    d(x^s_i)/dt        = phi_i(h^s) * d(t^s)/dt   (one per state)

Families whose time map is the identity and whose state maps are pure
shifts x_i + g_i(t, s) admit exact symbolic verification; anything else is
checked numerically on sampled points.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import (
    InvalidFamilyError,
    MissingGaugeError,
    NonlinearIdentityError,
    SolverError,
    UnsupportedError,
)
from .expr import Expr, ONE, VarSpace, ZERO, total_derivative
from .linsolve import identity_to_linear_system, solve_linear
from .problem import ProblemSpec

__all__ = [
    "TransformFamily",
    "InvarianceReport",
    "check_invariance",
    "synthesize_gauge",
    "find_symmetry_ansatz",
]


@dataclass(frozen=True)
class TransformFamily:
    """One-parameter transformation family; the identity at parameter 0 is
    enforced on construction."""

    space: VarSpace
    t_map: Expr
    x_maps: tuple[Expr, ...]
    u_maps: tuple[Expr, ...]
    gauge: Expr | None = None

    def __post_init__(self):
        object.__setattr__(self, "x_maps", tuple(self.x_maps))
        object.__setattr__(self, "u_maps", tuple(self.u_maps))
        sp = self.space
        if len(self.x_maps) != sp.n or len(self.u_maps) != sp.m:
            raise InvalidFamilyError("one map per state and per control is required")
        allowed = sp.all_names()
        for label, e in self._labelled_maps():
            stray = e.free_names() - allowed
            if stray:
                raise InvalidFamilyError(f"{label} uses undeclared names {sorted(stray)}")
        at_zero = {sp.parameter: ZERO}
        pairs = [(self.t_map, Expr.var(sp.time))]
        pairs += [(m, Expr.var(v)) for m, v in zip(self.x_maps, sp.states)]
        pairs += [(m, Expr.var(v)) for m, v in zip(self.u_maps, sp.controls)]
        for m, base in pairs:
            if m.subs(at_zero) != base:
                raise InvalidFamilyError(
                    f"family is not the identity at {sp.parameter} = 0: {m} -> {m.subs(at_zero)}"
                )

    def _labelled_maps(self):
        sp = self.space
        yield "t map", self.t_map
        for name, e in zip(sp.states, self.x_maps):
            yield f"map of {name}", e
        for name, e in zip(sp.controls, self.u_maps):
            yield f"map of {name}", e
        if self.gauge is not None:
            yield "gauge", self.gauge

    # -- structure ----------------------------------------------------------

    @property
    def time_identity(self) -> bool:
        return self.t_map == Expr.var(self.space.time)

    @property
    def is_shift(self) -> bool:
        """True when t^s = t and every state/control map is the variable plus
        a term free of states and controls."""
        if not self.time_identity:
            return False
        sp = self.space
        names = set(sp.states) | set(sp.controls)
        shifted = list(zip(self.x_maps, sp.states)) + list(zip(self.u_maps, sp.controls))
        return all(not (m - Expr.var(v)).has_any(names) for m, v in shifted)

    def state_shifts(self) -> tuple[Expr, ...]:
        if not self.is_shift:
            raise InvalidFamilyError("family is not in shift form")
        return tuple(m - Expr.var(v) for m, v in zip(self.x_maps, self.space.states))

    def control_shifts(self) -> tuple[Expr, ...]:
        if not self.is_shift:
            raise InvalidFamilyError("family is not in shift form")
        return tuple(m - Expr.var(v) for m, v in zip(self.u_maps, self.space.controls))

    def apply(self, e: Expr) -> Expr:
        """Compose e with the family: e(h^s(t, x, u))."""
        sp = self.space
        binding = {sp.time: self.t_map}
        binding.update(dict(zip(sp.states, self.x_maps)))
        binding.update(dict(zip(sp.controls, self.u_maps)))
        return e.subs(binding)

    def with_gauge(self, gauge: Expr) -> TransformFamily:
        return TransformFamily(self.space, self.t_map, self.x_maps, self.u_maps, gauge)


@dataclass(frozen=True)
class InvarianceReport:
    mode: str  # "symbolic-exact" | "numeric-sampled"
    lagrangian_ok: bool
    dynamics_ok: tuple[bool, ...]
    lagrangian_residual: Expr
    dynamics_residuals: tuple[Expr, ...]
    max_residual: float = 0.0
    samples: int = 0

    @property
    def verdict(self) -> bool:
        return self.lagrangian_ok and all(self.dynamics_ok)

    def to_text(self) -> str:
        lines = [f"mode: {self.mode}", f"verdict: {'invariant' if self.verdict else 'NOT invariant'}"]
        tag = "ok" if self.lagrangian_ok else "FAIL"
        lines.append(f"lagrangian identity: {tag}  residual = {self.lagrangian_residual}")
        for i, (ok, res) in enumerate(zip(self.dynamics_ok, self.dynamics_residuals)):
            tag = "ok" if ok else "FAIL"
            lines.append(f"dynamics[{i}] identity: {tag}  residual = {res}")
        if self.mode == "numeric-sampled":
            lines.append(f"max sampled residual: {self.max_residual:.3e} over {self.samples} points")
        return "\n".join(lines)

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "verdict": self.verdict,
            "lagrangian_ok": self.lagrangian_ok,
            "dynamics_ok": list(self.dynamics_ok),
            "lagrangian_residual": str(self.lagrangian_residual),
            "dynamics_residuals": [str(e) for e in self.dynamics_residuals],
            "max_residual": self.max_residual,
            "samples": self.samples,
        }


def _residual_exprs(p: ProblemSpec, f: TransformFamily) -> tuple[Expr, list[Expr]]:
    """Exact residual expressions of the two invariance identities (with the
    d(t^s)/dt factor, which is 1 for time-identity families)."""
    sp = p.space
    dts = total_derivative(f.t_map, sp, p.dynamics)
    gauge_rate = total_derivative(f.gauge, sp, p.dynamics)
    res_l = f.apply(p.lagrangian) * dts - p.lagrangian - gauge_rate
    res_d = [
        total_derivative(xm, sp, p.dynamics) - f.apply(phi) * dts
        for xm, phi in zip(f.x_maps, p.dynamics)
    ]
    return res_l, res_d


def check_invariance(
    p: ProblemSpec,
    f: TransformFamily,
    mode: str = "auto",
    samples: int = 500,
    tol: float = 1e-9,
    seed: int = 42,
    state_box: float = 10.0,
    param_box: float = 2.0,
) -> InvarianceReport:
    """Verify the two invariance identities, exactly when possible.

    Exact verification needs the time map to be the identity and the state
    maps and gauge to be control-free; otherwise ``samples`` pseudo-random
    points are tested against ``tol``.  A missing gauge raises
    :class:`MissingGaugeError` (build one with :func:`synthesize_gauge`).
    """
    sp = p.space
    if f.gauge is None:
        raise MissingGaugeError(
            "family has no gauge term; call synthesize_gauge(problem, family) first"
        )
    if f.gauge.has_any(sp.controls):
        raise UnsupportedError("gauge terms depending on controls are not supported")
    controls = set(sp.controls)
    pointwise_ok = not f.t_map.has_any(controls) and not any(
        xm.has_any(controls) for xm in f.x_maps
    )
    if not pointwise_ok:
        raise UnsupportedError(
            "time/state maps depending on controls are not supported: their total "
            "time derivative would involve du/dt"
        )
    symbolic_ok = f.time_identity
    if mode == "auto":
        mode = "symbolic" if symbolic_ok else "numeric"
    if mode == "symbolic" and not symbolic_ok:
        raise UnsupportedError("symbolic check needs the identity time map")
    if mode not in ("symbolic", "numeric"):
        raise ValueError(f"unknown mode {mode!r}")

    res_l, res_d = _residual_exprs(p, f)

    if mode == "symbolic":
        return InvarianceReport(
            mode="symbolic-exact",
            lagrangian_ok=res_l.is_zero,
            dynamics_ok=tuple(d.is_zero for d in res_d),
            lagrangian_residual=res_l,
            dynamics_residuals=tuple(res_d),
        )

    a, b = p.horizon_floats()
    rng = np.random.default_rng(seed)
    names = sorted(
        set().union(res_l.free_names(), *(d.free_names() for d in res_d))
    )
    max_l = 0.0
    max_d = [0.0] * sp.n
    for _ in range(samples):
        env: dict[str, float] = {}
        for name in names:
            if name == sp.time:
                env[name] = float(rng.uniform(a, b))
            elif name == sp.parameter:
                env[name] = float(rng.uniform(-param_box, param_box))
            else:
                env[name] = float(rng.uniform(-state_box, state_box))
        max_l = max(max_l, abs(res_l.eval(env)))
        for i, d in enumerate(res_d):
            max_d[i] = max(max_d[i], abs(d.eval(env)))
    return InvarianceReport(
        mode="numeric-sampled",
        lagrangian_ok=max_l <= tol,
        dynamics_ok=tuple(v <= tol for v in max_d),
        lagrangian_residual=res_l,
        dynamics_residuals=tuple(res_d),
        max_residual=max(max_l, *max_d) if max_d else max_l,
        samples=samples,
    )


# ---------------------------------------------------------------------------
# gauge synthesis
# ---------------------------------------------------------------------------


def _split_by_vars(e: Expr, names: Sequence[str]) -> dict[tuple[tuple[str, int], ...], Expr]:
    """Group an expression by its monomials in ``names``; the values are the
    cofactors (free of ``names``).  The denominator must be free of them."""
    nameset = set(names)
    if any(nm in nameset for mono in e._den for nm, _ in mono):  # noqa: SLF001
        raise UnsupportedError(f"expression has {sorted(nameset)} in a denominator: {e}")
    groups: dict[tuple[tuple[str, int], ...], Expr] = {}
    for mono, c in e._num.items():  # noqa: SLF001
        key = tuple((nm, ex) for nm, ex in mono if nm in nameset)
        rest = tuple((nm, ex) for nm, ex in mono if nm not in nameset)
        piece = Expr({rest: c}, dict(e._den))  # noqa: SLF001
        groups[key] = groups.get(key, ZERO) + piece
    return {k: v for k, v in groups.items() if not v.is_zero}


def _integrator_target(p: ProblemSpec, var_name: str) -> int | None:
    """Index i with dynamics phi_i == var_name, if any (integrator chains)."""
    v = Expr.var(var_name)
    for i, phi in enumerate(p.dynamics):
        if phi == v:
            return i
    return None


def _gauge_peel(p: ProblemSpec, delta: Expr) -> tuple[Expr, list[Expr]]:
    """Construct Phi with dPhi/dt = delta by peeling integrator directions.

    Returns (phi, obstructions); a nonzero obstruction means no gauge exists
    within the supported class (dynamics where fresh terms can be absorbed
    through states whose velocity is a bare control or state variable).
    """
    sp = p.space
    phi = ZERO
    remainder = delta
    obstructions: list[Expr] = []
    mixed = list(sp.states) + list(sp.controls)

    for _ in range(sp.n + 2):
        progress = False
        # absorb control-linear terms through states with phi_i == u_j
        groups = _split_by_vars(remainder, list(sp.controls))
        remainder = groups.pop((), ZERO)
        for key, coeff in groups.items():
            if len(key) == 1 and key[0][1] == 1:
                target = _integrator_target(p, key[0][0])
                if target is not None:
                    psi = coeff.antiderivative(sp.states[target])
                    phi = phi + psi
                    # td(psi) contains coeff * u_j, cancelling the pulled term
                    remainder = remainder - (
                        total_derivative(psi, sp, p.dynamics) - coeff * Expr.var(key[0][0])
                    )
                    progress = True
                    continue
            obstructions.append(coeff * Expr({key: Fraction(1)}))
        # absorb state-linear terms through states with phi_i == x_k
        for x_name in sp.states:
            target = _integrator_target(p, x_name)
            if target is None:
                continue
            try:
                deg = remainder.degree(x_name)
            except Exception:
                obstructions.append(remainder)
                remainder = ZERO
                break
            if deg >= 1:
                coeff = remainder.coeff(x_name, 1)
                if coeff.is_zero or coeff.has_any([x_name]):
                    continue
                psi = coeff.antiderivative(sp.states[target])
                phi = phi + psi
                # the peeled term coeff * x_name is still inside remainder,
                # so the whole derivative of psi is subtracted
                remainder = remainder - total_derivative(psi, sp, p.dynamics)
                progress = True
        if not progress:
            break

    # whatever still touches states or controls cannot be absorbed
    groups = _split_by_vars(remainder, mixed)
    remainder = groups.pop((), ZERO)
    for key, coeff in groups.items():
        obstructions.append(coeff * Expr({key: Fraction(1)}))
    # the clean (t, s)-part integrates in time
    phi = phi + remainder.antiderivative(sp.time)
    return phi, [o for o in obstructions if not o.is_zero]


def _drop_parameter_only_terms(phi: Expr, sp: VarSpace) -> Expr:
    """Normalize the gauge: additive terms free of t and the states are
    constants along trajectories and are dropped (zero constant term)."""
    keep = {sp.time, *sp.states}
    groups = _split_by_vars(phi, sorted(keep))
    groups.pop((), None)
    out = ZERO
    for key, coeff in groups.items():
        out = out + coeff * Expr(dict([(key, Fraction(1))]))
    return out


def synthesize_gauge(p: ProblemSpec, f: TransformFamily) -> Expr:
    """Construct the gauge Phi^s with dPhi/dt = L(h^s) - L for a shift
    family, normalized to have no additive term free of (t, x)."""
    if not f.is_shift:
        raise UnsupportedError("gauge synthesis is implemented for shift families only")
    delta = f.apply(p.lagrangian) - p.lagrangian
    phi, obstructions = _gauge_peel(p, delta)
    if obstructions:
        raise UnsupportedError(
            "no gauge exists in the supported class; unabsorbable terms: "
            + ", ".join(str(o) for o in obstructions[:4])
        )
    phi = _drop_parameter_only_terms(phi, p.space)
    check = total_derivative(phi, p.space, p.dynamics) - delta
    if not check.is_zero:
        raise SolverError(f"gauge synthesis failed to verify: residual {check}")
    return phi


# ---------------------------------------------------------------------------
# ansatz search
# ---------------------------------------------------------------------------


def _fresh(base: str, taken: set[str]) -> str:
    name = base
    while name in taken:
        name = "_" + name
    return name


def find_symmetry_ansatz(
    p: ProblemSpec, max_deg_t: int = 1, max_deg_s: int = 1
) -> list[TransformFamily]:
    """Search for shift symmetries x_i + sum c t^j s^k, u_l + sum d t^j s^k
    (1 <= k <= max_deg_s, 0 <= j <= max_deg_t).

    The control-system identity and the existence of a synthesizable gauge
    are imposed as polynomial identities in (t, x, u, s); the resulting
    linear system's nullspace is returned as concrete verified families,
    identity excluded.  An empty list is a valid outcome.
    """
    sp = p.space
    if max_deg_t < 0 or max_deg_s < 0:
        raise ValueError("degree bounds must be nonnegative")
    taken = set(sp.all_names())
    t_var = Expr.var(sp.time)
    s_var = Expr.var(sp.parameter)

    unknowns: list[str] = []
    x_shift_terms: list[list[tuple[str, Expr]]] = []
    u_shift_terms: list[list[tuple[str, Expr]]] = []
    for kind, count, bucket in (("cs", sp.n, x_shift_terms), ("ds", sp.m, u_shift_terms)):
        for i in range(count):
            terms: list[tuple[str, Expr]] = []
            for j in range(max_deg_t + 1):
                for k in range(1, max_deg_s + 1):
                    name = _fresh(f"{kind}{i}_{j}_{k}", taken)
                    taken.add(name)
                    unknowns.append(name)
                    terms.append((name, t_var**j * s_var**k))
            bucket.append(terms)
    if not unknowns:
        return []

    wide = sp.with_coefficients(*unknowns)

    def shift_of(terms: list[tuple[str, Expr]]) -> Expr:
        acc = ZERO
        for name, mono in terms:
            acc = acc + Expr.var(name) * mono
        return acc

    x_maps = tuple(Expr.var(v) + shift_of(ts) for v, ts in zip(sp.states, x_shift_terms))
    u_maps = tuple(Expr.var(v) + shift_of(ts) for v, ts in zip(sp.controls, u_shift_terms))
    family = TransformFamily(space=wide, t_map=t_var, x_maps=x_maps, u_maps=u_maps)

    identity_vars = [sp.time, sp.parameter, *sp.states, *sp.controls]
    rows: list[list[Expr]] = []
    rhs: list[Expr] = []
    for xm, phi in zip(x_maps, p.dynamics):
        residual = total_derivative(xm, wide, p.dynamics) - family.apply(phi)
        r, b, _ = identity_to_linear_system(residual, unknowns, identity_vars)
        rows += r
        rhs += b
    try:
        cs_sol = solve_linear(rows, rhs)
    except NonlinearIdentityError as exc:  # pragma: no cover - guarded above
        raise UnsupportedError(f"ansatz equations are not linear: {exc}") from exc
    if not cs_sol.consistent or not cs_sol.nullspace:
        return []

    # reparameterize the control-system solution space and impose the
    # synthesizable-gauge condition on it
    lam = [_fresh(f"lam{i}", taken) for i in range(len(cs_sol.nullspace))]
    taken.update(lam)
    lam_space = sp.with_coefficients(*lam)

    def combine(weights: Sequence[Expr]) -> dict[str, Expr]:
        values = {name: ZERO for name in unknowns}
        for w, basis_vec in zip(weights, cs_sol.nullspace):
            for name, entry in zip(unknowns, basis_vec):
                values[name] = values[name] + w * entry
        return values

    lam_binding = combine([Expr.var(nm) for nm in lam])
    lam_x_maps = tuple(m.subs(lam_binding) for m in x_maps)
    lam_u_maps = tuple(m.subs(lam_binding) for m in u_maps)
    lam_family = TransformFamily(space=lam_space, t_map=t_var, x_maps=lam_x_maps, u_maps=lam_u_maps)
    delta = lam_family.apply(p.lagrangian) - p.lagrangian
    _, obstructions = _gauge_peel(p, delta)

    rows2: list[list[Expr]] = []
    rhs2: list[Expr] = []
    for obstruction in obstructions:
        try:
            r, b, _ = identity_to_linear_system(obstruction, lam, identity_vars)
        except NonlinearIdentityError as exc:
            raise UnsupportedError(
                f"gauge condition is not linear in the ansatz coefficients: {exc}"
            ) from exc
        rows2 += r
        rhs2 += b
    if rows2:
        gauge_sol = solve_linear(rows2, rhs2)
        if not gauge_sol.consistent:
            return []
        directions = gauge_sol.nullspace
    else:
        directions = tuple(
            tuple(ONE if i == j else ZERO for j in range(len(lam))) for i in range(len(lam))
        )

    families: list[TransformFamily] = []
    for direction in directions:
        concrete = combine(direction)
        fx = tuple(m.subs(concrete) for m in x_maps)
        fu = tuple(m.subs(concrete) for m in u_maps)
        if all(m == Expr.var(v) for m, v in zip(fx, sp.states)) and all(
            m == Expr.var(v) for m, v in zip(fu, sp.controls)
        ):
            continue  # identity direction
        fam = TransformFamily(space=sp, t_map=t_var, x_maps=fx, u_maps=fu)
        fam = fam.with_gauge(synthesize_gauge(p, fam))
        report = check_invariance(p, fam)
        if not report.verdict:  # pragma: no cover - construction guarantees this
            raise SolverError(f"ansatz produced a non-invariant family:\n{report.to_text()}")
        families.append(fam)
    return families
