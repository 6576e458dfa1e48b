"""Problem specifications, solutions, and the sectioned problem-file format.

A problem is

    minimize  I[x,u] = integral_a^b L(t, x(t), u(t)) dt
    subject to  x'(t) = phi(t, x(t), u(t))  and scalar endpoint pins,

with controls unconstrained.  Horizon endpoints and pin values are exact
expressions so that fully symbolic instances (boundary data as free
coefficient symbols) flow through the same types as numeric ones.

File format (UTF-8, ``#`` comments)::

    [problem]
    state = x1, x2
    control = u
    t0 = 0
    t1 = 1
    lagrangian = u^2
    dynamics = x2, u
    boundary = t0 x1 -1, t1 x1 0, t1 x2 0

    [symmetry]            # optional
    t_s = t
    x_s = x1 + 1/2*s^2*t^2, x2 + s^2*t
    u_s = u + s^2
    gauge = s^4*t + 2*s^2*x2
"""

from __future__ import annotations

import configparser
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np

from .errors import ProblemFormatError
from .expr import Expr, ParseError, VarSpace, parse

if TYPE_CHECKING:  # avoid a load-time cycle; symmetry imports ProblemSpec
    from .symmetry import TransformFamily

__all__ = [
    "BoundaryPin",
    "ProblemSpec",
    "Samples",
    "Solution",
    "load_problem",
    "loads_problem",
    "dumps_problem",
    "cost_of",
    "residuals",
    "exact_cost",
]

ENDPOINTS = ("t0", "t1")


@dataclass(frozen=True)
class BoundaryPin:
    """One scalar endpoint condition x_state(endpoint) = value."""

    endpoint: str
    state: int
    value: Expr

    def __post_init__(self):
        if self.endpoint not in ENDPOINTS:
            raise ProblemFormatError(f"endpoint must be one of {ENDPOINTS}, got {self.endpoint!r}")


@dataclass(frozen=True)
class ProblemSpec:
    space: VarSpace
    lagrangian: Expr
    dynamics: tuple[Expr, ...]
    horizon: tuple[Expr, Expr]
    boundary: tuple[BoundaryPin, ...]

    def __post_init__(self):
        object.__setattr__(self, "dynamics", tuple(self.dynamics))
        object.__setattr__(self, "horizon", tuple(self.horizon))
        object.__setattr__(self, "boundary", tuple(self.boundary))
        sp = self.space
        if len(self.dynamics) != sp.n:
            raise ProblemFormatError(
                f"{sp.n} states need {sp.n} dynamics expressions, got {len(self.dynamics)}"
            )
        allowed = sp.all_names() - {sp.parameter}
        for label, e in [("lagrangian", self.lagrangian)] + [
            (f"dynamics[{i}]", d) for i, d in enumerate(self.dynamics)
        ]:
            stray = e.free_names() - allowed
            if stray:
                raise ProblemFormatError(f"{label} uses undeclared or reserved names {sorted(stray)}")
        for label, e in [("t0", self.horizon[0]), ("t1", self.horizon[1])] + [
            (f"pin {p.endpoint}/{sp.states[p.state]}", p.value) for p in self.boundary
        ]:
            stray = e.free_names() - sp.coefficients
            if stray:
                raise ProblemFormatError(
                    f"{label} must be a constant or coefficient expression, found {sorted(stray)}"
                )
        seen: set[tuple[str, int]] = set()
        for p in self.boundary:
            if not 0 <= p.state < sp.n:
                raise ProblemFormatError(f"pin references state index {p.state} out of range")
            key = (p.endpoint, p.state)
            if key in seen:
                raise ProblemFormatError(
                    f"duplicate pin for ({p.endpoint}, {sp.states[p.state]})"
                )
            seen.add(key)
        a, b = self.horizon
        if a.is_constant and b.is_constant and a.as_fraction() >= b.as_fraction():
            raise ProblemFormatError("horizon must satisfy t0 < t1")

    # -- helpers ------------------------------------------------------------

    @property
    def is_numeric(self) -> bool:
        return all(e.is_constant for e in self.horizon) and all(
            p.value.is_constant for p in self.boundary
        )

    def horizon_floats(self) -> tuple[float, float]:
        a, b = self.horizon
        if not (a.is_constant and b.is_constant):
            raise ValueError("horizon is symbolic; numeric value unavailable")
        return float(a.as_fraction()), float(b.as_fraction())

    def endpoint_expr(self, endpoint: str) -> Expr:
        return self.horizon[ENDPOINTS.index(endpoint)]

    def pins_at(self, endpoint: str) -> dict[int, Expr]:
        return {p.state: p.value for p in self.boundary if p.endpoint == endpoint}

    def pinned_at_both(self) -> frozenset[int]:
        return frozenset(self.pins_at("t0")) & frozenset(self.pins_at("t1"))


@dataclass(frozen=True)
class Samples:
    """Mesh trajectory: states at the N+1 nodes, one control per interval."""

    times: np.ndarray
    states: np.ndarray  # (N+1, n)
    controls: np.ndarray  # (N, m)

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "states", np.asarray(self.states, dtype=float))
        object.__setattr__(self, "controls", np.asarray(self.controls, dtype=float))
        if self.states.shape[0] != self.times.shape[0]:
            raise ValueError("one state row per node required")
        if self.controls.shape[0] != self.times.shape[0] - 1:
            raise ValueError("one control row per interval required")


@dataclass(frozen=True)
class Solution:
    """Output of any solver route.

    ``states``/``controls`` are closed forms in the time variable (plus any
    coefficient symbols) when the route is symbolic; ``samples`` carries mesh
    data when it is numeric.  ``cost`` is exact for symbolic routes and a
    float for the oracle.
    """

    status: str  # "certified-global" | "candidate"
    method: str  # "noether" | "leitmann" | "oracle"
    cost: Expr | float
    states: tuple[Expr, ...] | None = None
    controls: tuple[Expr, ...] | None = None
    samples: Samples | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.status not in ("certified-global", "candidate"):
            raise ValueError(f"unknown status {self.status!r}")
        if self.states is None and self.samples is None:
            raise ValueError("a solution needs closed forms or samples")

    @property
    def has_closed_form(self) -> bool:
        return self.states is not None

    def cost_float(self) -> float:
        return float(self.cost.as_fraction()) if isinstance(self.cost, Expr) else float(self.cost)


# ---------------------------------------------------------------------------
# trajectory evaluation, quadrature, residuals
# ---------------------------------------------------------------------------


def _trajectory_at(p: ProblemSpec, sol: Solution, tj: float) -> tuple[list[float], list[float]]:
    sp = p.space
    if sol.has_closed_form:
        x = [e.eval({sp.time: tj}) for e in sol.states]
        u = [e.eval({sp.time: tj}) for e in sol.controls]
        return x, u
    s = sol.samples
    times = s.times
    x = [float(np.interp(tj, times, s.states[:, i])) for i in range(s.states.shape[1])]
    k = int(np.clip(np.searchsorted(times, tj, side="right") - 1, 0, len(times) - 2))
    u = [float(v) for v in s.controls[k]]
    return x, u


def cost_of(p: ProblemSpec, sol: Solution, mesh: int = 200) -> float:
    """Composite-Simpson quadrature of L along the solution trajectory.

    Needs a numeric horizon; independent of the solver's own cost report.
    """
    a, b = p.horizon_floats()
    if mesh % 2:
        mesh += 1
    sp = p.space
    h = (b - a) / mesh
    total = 0.0
    for j in range(mesh + 1):
        tj = a + j * h
        x, u = _trajectory_at(p, sol, tj)
        val = p.lagrangian.eval(
            {sp.time: tj, **dict(zip(sp.states, x)), **dict(zip(sp.controls, u))}
        )
        w = 1 if j in (0, mesh) else (4 if j % 2 else 2)
        total += w * val
    return total * h / 3.0


def exact_cost(p: ProblemSpec, states: Sequence[Expr], controls: Sequence[Expr]) -> Expr:
    """Exact integral of L along closed-form trajectories (polynomial in t)."""
    sp = p.space
    along = p.lagrangian.subs(
        {**dict(zip(sp.states, states)), **dict(zip(sp.controls, controls))}
    )
    anti = along.antiderivative(sp.time)
    a, b = p.horizon
    return anti.subs({sp.time: b}) - anti.subs({sp.time: a})


def residuals(p: ProblemSpec, sol: Solution, mesh: int = 200) -> tuple[float, float]:
    """(max dynamics defect, max boundary violation).

    Closed forms are differentiated symbolically, so an exact solution
    reports exactly (0.0, 0.0) even on symbolic instances; sampled
    trajectories use central differences at interior nodes.
    """
    sp = p.space
    if sol.has_closed_form:
        return _closed_form_residuals(p, sol, mesh)

    s = sol.samples
    times, xs, us = s.times, s.states, s.controls
    dyn = 0.0
    for k in range(1, len(times) - 1):
        hk = times[k + 1] - times[k - 1]
        ctr = 0.5 * (us[k - 1] + us[k])  # node control: mean of adjacent intervals
        env = {sp.time: float(times[k])}
        env.update({name: float(v) for name, v in zip(sp.states, xs[k])})
        env.update({name: float(v) for name, v in zip(sp.controls, ctr)})
        for i, phi in enumerate(p.dynamics):
            dd = (xs[k + 1, i] - xs[k - 1, i]) / hk - phi.eval(env)
            dyn = max(dyn, abs(dd))
    bnd = 0.0
    for pin in p.boundary:
        node = 0 if pin.endpoint == "t0" else len(times) - 1
        bnd = max(bnd, abs(xs[node, pin.state] - float(pin.value.as_fraction())))
    return dyn, bnd


def _closed_form_residuals(p: ProblemSpec, sol: Solution, mesh: int) -> tuple[float, float]:
    sp = p.space
    bind = {**dict(zip(sp.states, sol.states)), **dict(zip(sp.controls, sol.controls))}
    defects = [
        sol.states[i].diff(sp.time) - p.dynamics[i].subs(bind) for i in range(sp.n)
    ]
    bnd_exprs = [
        sol.states[pin.state].subs({sp.time: p.endpoint_expr(pin.endpoint)}) - pin.value
        for pin in p.boundary
    ]
    if all(d.is_zero for d in defects) and all(e.is_zero for e in bnd_exprs):
        return 0.0, 0.0
    # nonzero residual expressions need numbers to be quantified
    a, b = p.horizon_floats()
    dyn = 0.0
    for j in range(mesh + 1):
        tj = a + j * (b - a) / mesh
        for d in defects:
            dyn = max(dyn, abs(d.eval({sp.time: tj})))
    bnd = max((abs(e.eval({})) for e in bnd_exprs), default=0.0)
    return dyn, bnd


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------

_PROBLEM_KEYS = {"state", "control", "t0", "t1", "lagrangian", "dynamics", "boundary"}
_SYMMETRY_KEYS = {"t_s", "x_s", "u_s", "gauge"}


def _split_list(raw: str) -> list[str]:
    items = [part.strip() for part in raw.split(",")]
    return [part for part in items if part]


def _fraction_of(raw: str, what: str) -> Fraction:
    try:
        return Fraction(raw)
    except (ValueError, ZeroDivisionError) as exc:
        raise ProblemFormatError(f"{what}: not a number: {raw!r}") from exc


def loads_problem(text: str) -> tuple[ProblemSpec, "TransformFamily | None"]:
    cp = configparser.ConfigParser(
        comment_prefixes=("#",), inline_comment_prefixes=("#",), interpolation=None
    )
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ProblemFormatError(f"malformed problem file: {exc}") from exc

    sections = set(cp.sections())
    if "problem" not in sections:
        raise ProblemFormatError("missing [problem] section")
    extra = sections - {"problem", "symmetry"}
    if extra:
        raise ProblemFormatError(f"unknown sections {sorted(extra)}")

    sec = cp["problem"]
    if "control_set" in sec:
        raise ProblemFormatError("constrained control sets are not supported (controls are unconstrained)")
    unknown = set(sec) - _PROBLEM_KEYS
    if unknown:
        raise ProblemFormatError(f"unknown keys in [problem]: {sorted(unknown)}")
    missing = _PROBLEM_KEYS - set(sec)
    if missing:
        raise ProblemFormatError(f"missing keys in [problem]: {sorted(missing)}")

    states = _split_list(sec["state"])
    controls = _split_list(sec["control"])
    try:
        space = VarSpace(states=tuple(states), controls=tuple(controls))
    except ValueError as exc:
        raise ProblemFormatError(str(exc)) from exc

    def parse_in(raw: str, what: str, space: VarSpace = space) -> Expr:
        try:
            return parse(raw, space)
        except ParseError as exc:
            raise ProblemFormatError(f"{what}: {exc}") from exc

    lagrangian = parse_in(sec["lagrangian"], "lagrangian")
    dynamics = tuple(
        parse_in(raw, f"dynamics[{i}]") for i, raw in enumerate(_split_list(sec["dynamics"]))
    )
    horizon = (
        Expr.const(_fraction_of(sec["t0"], "t0")),
        Expr.const(_fraction_of(sec["t1"], "t1")),
    )

    pins: list[BoundaryPin] = []
    for entry in _split_list(sec["boundary"]):
        parts = entry.split()
        if len(parts) != 3:
            raise ProblemFormatError(
                f"boundary entry {entry!r} must be '<t0|t1> <state> <value>'"
            )
        tag, name, raw_value = parts
        if tag not in ENDPOINTS:
            raise ProblemFormatError(f"boundary entry {entry!r}: endpoint must be t0 or t1")
        if name not in space.states:
            raise ProblemFormatError(f"boundary entry {entry!r}: unknown state {name!r}")
        pins.append(
            BoundaryPin(tag, space.states.index(name), Expr.const(_fraction_of(raw_value, entry)))
        )

    spec = ProblemSpec(
        space=space,
        lagrangian=lagrangian,
        dynamics=dynamics,
        horizon=horizon,
        boundary=tuple(pins),
    )

    family = None
    if "symmetry" in sections:
        from .symmetry import TransformFamily  # deferred: symmetry imports this module

        ssec = cp["symmetry"]
        unknown = set(ssec) - _SYMMETRY_KEYS
        if unknown:
            raise ProblemFormatError(f"unknown keys in [symmetry]: {sorted(unknown)}")
        for key in ("t_s", "x_s", "u_s"):
            if key not in ssec:
                raise ProblemFormatError(f"missing key {key!r} in [symmetry]")
        x_maps = [parse_in(raw, "x_s") for raw in _split_list(ssec["x_s"])]
        u_maps = [parse_in(raw, "u_s") for raw in _split_list(ssec["u_s"])]
        if len(x_maps) != space.n or len(u_maps) != space.m:
            raise ProblemFormatError("x_s needs one map per state and u_s one per control")
        gauge = parse_in(ssec["gauge"], "gauge") if "gauge" in ssec else None
        family = TransformFamily(
            space=space,
            t_map=parse_in(ssec["t_s"], "t_s"),
            x_maps=tuple(x_maps),
            u_maps=tuple(u_maps),
            gauge=gauge,
        )

    return spec, family


def load_problem(path: str | Path) -> tuple[ProblemSpec, "TransformFamily | None"]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ProblemFormatError(f"cannot read {path}: {exc}") from exc
    return loads_problem(text)


def dumps_problem(spec: ProblemSpec, family: "TransformFamily | None" = None) -> str:
    """Serialize back to the file format; needs numeric horizon and pins."""
    if not spec.is_numeric:
        raise ProblemFormatError("cannot serialize a problem with symbolic horizon or pins")
    sp = spec.space
    out = io.StringIO()
    out.write("[problem]\n")
    out.write(f"state = {', '.join(sp.states)}\n")
    out.write(f"control = {', '.join(sp.controls)}\n")
    for tag, e in zip(ENDPOINTS, spec.horizon):
        out.write(f"{tag} = {e}\n")
    out.write(f"lagrangian = {spec.lagrangian}\n")
    out.write(f"dynamics = {', '.join(str(d) for d in spec.dynamics)}\n")
    entries = ", ".join(
        f"{p.endpoint} {sp.states[p.state]} {p.value}" for p in spec.boundary
    )
    out.write(f"boundary = {entries}\n")
    if family is not None:
        out.write("\n[symmetry]\n")
        out.write(f"t_s = {family.t_map}\n")
        out.write(f"x_s = {', '.join(str(e) for e in family.x_maps)}\n")
        out.write(f"u_s = {', '.join(str(e) for e in family.u_maps)}\n")
        if family.gauge is not None:
            out.write(f"gauge = {family.gauge}\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# solution serialization (used by the CLI)
# ---------------------------------------------------------------------------


def solution_summary(p: ProblemSpec, sol: Solution) -> dict:
    sp = p.space
    summary: dict = {
        "method": sol.method,
        "status": sol.status,
        "cost": sol.cost_float() if not isinstance(sol.cost, Expr) or sol.cost.is_constant else str(sol.cost),
    }
    if sol.has_closed_form:
        summary["states"] = {name: str(e) for name, e in zip(sp.states, sol.states)}
        summary["controls"] = {name: str(e) for name, e in zip(sp.controls, sol.controls)}
    diagnostics = {}
    for key, value in sorted(sol.diagnostics.items()):
        diagnostics[key] = value if isinstance(value, (int, float, str, bool, list)) else str(value)
    if diagnostics:
        summary["diagnostics"] = diagnostics
    if p.is_numeric:
        dyn, bnd = residuals(p, sol)
        summary["residuals"] = {"dynamics": dyn, "boundary": bnd}
    return summary


def solution_to_json(p: ProblemSpec, sol: Solution) -> str:
    return json.dumps(solution_summary(p, sol), indent=2, sort_keys=True) + "\n"


def solution_to_csv(p: ProblemSpec, sol: Solution, mesh: int = 200) -> str:
    """Node table 't, x..., u...'; closed forms are sampled on a uniform
    mesh, sampled solutions use their own nodes (the last row repeats the
    final interval's control)."""
    sp = p.space
    out = io.StringIO()
    out.write(",".join(["t", *sp.states, *sp.controls]) + "\n")
    if sol.has_closed_form:
        a, b = p.horizon_floats()
        times = [a + j * (b - a) / mesh for j in range(mesh + 1)]
        for tj in times:
            x = [e.eval({sp.time: tj}) for e in sol.states]
            u = [e.eval({sp.time: tj}) for e in sol.controls]
            out.write(",".join(repr(v) for v in [tj, *x, *u]) + "\n")
    else:
        s = sol.samples
        last = len(s.times) - 1
        for k, tk in enumerate(s.times):
            u = s.controls[min(k, last - 1)]
            row = [float(tk), *map(float, s.states[k]), *map(float, u)]
            out.write(",".join(repr(v) for v in row) + "\n")
    return out.getvalue()
