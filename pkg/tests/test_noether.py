"""Tests for the symmetry-based solver: generalization, parameter fitting,
pointwise certificates, and full solves (symbolic and numeric)."""

from __future__ import annotations

import math

import numpy as np
import pytest

from symoc import (
    TransformFamily,
    certify_trivial,
    check_invariance,
    fit_parameter,
    generalize,
    noether_solve,
)
from symoc.errors import SolverError, UnsupportedError
from symoc.expr import Expr, VarSpace, parse
from symoc.noether import GeneralizedProblem
from symoc.problem import BoundaryPin, ProblemSpec, exact_cost, residuals

SP = VarSpace(states=("x",), controls=("u",))


def _scalar_problem(L, dyn, pins, horizon=("0", "1"), sp=SP):
    return ProblemSpec(
        space=sp,
        lagrangian=parse(L, sp),
        dynamics=(parse(dyn, sp),),
        horizon=(parse(horizon[0], sp), parse(horizon[1], sp)),
        boundary=tuple(BoundaryPin(e, i, parse(v, sp)) for e, i, v in pins),
    )


def _shift_family(sp, xs, us, gauge):
    return TransformFamily(
        space=sp,
        t_map=parse("t", sp),
        x_maps=tuple(parse(x, sp) for x in xs),
        u_maps=tuple(parse(u, sp) for u in us),
        gauge=parse(gauge, sp),
    )


def _generic_straight_line():
    """u^2 along x' = u on [a, b] with symbolic endpoint data."""
    sp = VarSpace(states=("x",), controls=("u",),
                  coefficients=frozenset({"a", "b", "alpha", "beta"}))
    p = ProblemSpec(
        space=sp,
        lagrangian=parse("u^2", sp),
        dynamics=(parse("u", sp),),
        horizon=(parse("a", sp), parse("b", sp)),
        boundary=(
            BoundaryPin("t0", 0, parse("alpha", sp)),
            BoundaryPin("t1", 0, parse("beta", sp)),
        ),
    )
    f = _shift_family(sp, ["x + s*t"], ["u + s"], "s^2*t + 2*s*x")
    return p, f


class TestGeneralize:
    def test_pins_pick_up_the_state_shift(self, simple_problem):
        spec, fam = simple_problem
        g = generalize(spec, fam)
        assert [(pin.endpoint, str(pin.value)) for pin in g.pins] == [
            ("t0", "0"),
            ("t1", "s + 1"),
        ]

    def test_rocket_pins(self, rocket_problem):
        spec, fam = rocket_problem
        g = generalize(spec, fam)
        got = {(pin.endpoint, pin.state): str(pin.value) for pin in g.pins}
        assert got == {
            ("t0", 0): "-1",
            ("t1", 0): "1/2*s^2",
            ("t1", 1): "s^2",
        }

    def test_identity_family_changes_nothing(self, simple_problem):
        spec, _ = simple_problem
        ident = _shift_family(spec.space, ["x"], ["u"], "0")
        g = generalize(spec, ident)
        assert tuple(g.pins) == tuple(spec.boundary)

    def test_rejects_non_shift_families(self):
        p = _scalar_problem("u^2", "u", (("t0", 0, "0"), ("t1", 0, "1")))
        scaling = TransformFamily(
            space=SP,
            t_map=parse("t", SP),
            x_maps=(parse("x + s*x", SP),),
            u_maps=(parse("u + s*u", SP),),
            gauge=Expr.const(0),
        )
        with pytest.raises(UnsupportedError):
            generalize(p, scaling)

    def test_rejects_families_that_are_not_symmetries(self):
        p = _scalar_problem("u^2", "u", (("t0", 0, "0"), ("t1", 0, "1")))
        bad = _shift_family(SP, ["x + s*t"], ["u + s"], "s^2*t + 3*s*x")
        with pytest.raises(SolverError) as exc:
            generalize(p, bad)
        assert "not a variational symmetry" in str(exc.value)


class TestFitParameter:
    def test_simple_fixture_root(self, simple_problem):
        spec, fam = simple_problem
        fit = fit_parameter(generalize(spec, fam))
        assert fit.mode == "symbolic"
        assert fit.trivial_control == (Expr.const(0),)
        (root,) = fit.roots
        assert root.value == -1.0
        assert root.s_expr == Expr.const(-1)

    def test_symbolic_endpoint_data(self):
        p, f = _generic_straight_line()
        fit = fit_parameter(generalize(p, f))
        (root,) = fit.roots
        assert root.s_expr == parse("(alpha - beta)/(b - a)", p.space)

    def test_coincident_endpoints_need_no_shift(self):
        p = _scalar_problem("u^2", "u", (("t0", 0, "3"), ("t1", 0, "3")))
        f = _shift_family(SP, ["x + s*t"], ["u + s"], "s^2*t + 2*s*x")
        fit = fit_parameter(generalize(p, f))
        (root,) = fit.roots
        assert root.value == 0.0

    def test_even_parameter_gives_paired_roots(self, rocket_problem):
        spec, fam = rocket_problem
        fit = fit_parameter(generalize(spec, fam))
        assert {r.sign for r in fit.roots} == {1, -1}
        for r in fit.roots:
            assert r.s_squared == Expr.const(2)
            assert r.value == pytest.approx(r.sign * math.sqrt(2), abs=1e-14)
        assert fit.mismatch

    @pytest.mark.parametrize(
        "t0, t1, alpha, magnitude",
        [("0", "1", "1", math.sqrt(2)), ("1", "3", "2", 1.0), ("0", "2", "1/2", 0.5)],
    )
    def test_parameter_magnitude_tracks_the_data(self, t0, t1, alpha, magnitude):
        sp = VarSpace(states=("x1", "x2"), controls=("u",))
        p = ProblemSpec(
            space=sp,
            lagrangian=parse("u^2", sp),
            dynamics=(parse("x2", sp), parse("u", sp)),
            horizon=(parse(t0, sp), parse(t1, sp)),
            boundary=(
                BoundaryPin("t0", 0, parse(f"-({alpha})", sp)),
                BoundaryPin("t1", 0, Expr.const(0)),
                BoundaryPin("t1", 1, Expr.const(0)),
            ),
        )
        f = TransformFamily(
            space=sp,
            t_map=parse("t", sp),
            x_maps=(parse("x1 + 1/2*s^2*t^2", sp), parse("x2 + s^2*t", sp)),
            u_maps=(parse("u + s^2", sp),),
            gauge=parse("s^4*t + 2*s^2*x2", sp),
        )
        fit = fit_parameter(generalize(p, f))
        values = sorted(r.value for r in fit.roots)
        assert values == pytest.approx([-magnitude, magnitude], abs=1e-12)
        # each root makes the generalized pins hold along the fitted trajectory
        for sol in noether_solve(p, f):
            dyn, bnd = residuals(p, sol)
            assert dyn <= 1e-10
            assert bnd <= 1e-10

    def test_odd_cubic_shift_is_fitted_by_scanning(self):
        p = _scalar_problem("u^2", "u", (("t0", 0, "0"), ("t1", 0, "8")))
        f = _shift_family(SP, ["x + s^3*t"], ["u + s^3"], "s^6*t + 2*s^3*x")
        assert check_invariance(p, f).verdict
        fit = fit_parameter(generalize(p, f))
        (root,) = fit.roots
        assert root.value == pytest.approx(-2.0, abs=1e-10)

    def test_underdetermined_boundary_data(self):
        p = _scalar_problem("u^2", "u", (("t0", 0, "0"),))
        f = _shift_family(SP, ["x + s*t"], ["u + s"], "s^2*t + 2*s*x")
        with pytest.raises(SolverError):
            fit_parameter(generalize(p, f))

    def test_incompatible_boundary_data(self):
        # control-free dynamics cannot reach the far pin for any parameter
        p = _scalar_problem("u^2", "1", (("t0", 0, "0"), ("t1", 0, "5")))
        f = _shift_family(SP, ["x + s"], ["u"], "0")
        assert check_invariance(p, f).verdict
        with pytest.raises(SolverError) as exc:
            fit_parameter(generalize(p, f))
        assert "no trivializing parameter" in str(exc.value)

    def test_shooting_fallback_for_non_polynomial_flows(self):
        # x' = x has no polynomial trivial trajectory, so the fit integrates
        p = _scalar_problem("u^2", "x", (("t0", 0, "1"), ("t1", 0, "2")))
        ident = _shift_family(SP, ["x"], ["u"], "0")
        g = GeneralizedProblem(
            base=p,
            family=ident,
            pins=(
                BoundaryPin("t0", 0, parse("1 + s", SP)),
                BoundaryPin("t1", 0, parse("2 + s", SP)),
            ),
        )
        fit = fit_parameter(g)
        assert fit.mode == "numeric"
        (root,) = fit.roots
        expected = (2 - math.e) / (math.e - 1)
        assert root.value == pytest.approx(expected, abs=1e-9)


class TestCertify:
    @pytest.mark.parametrize(
        "L, triv, expected",
        [
            ("u^2", None, "certified-global"),
            ("u^4", None, "certified-global"),
            ("u^2 + t", None, "certified-global"),
            ("(u - 1)^2", ("1",), "certified-global"),
            ("u^2 + x^2", None, "candidate"),
            ("u^3", None, "candidate"),
            ("u^2 + 2*u", None, "candidate"),
        ],
    )
    def test_pointwise_certificate(self, L, triv, expected):
        p = _scalar_problem(L, "u", (("t0", 0, "0"), ("t1", 0, "1")))
        u_triv = None if triv is None else tuple(parse(v, SP) for v in triv)
        assert certify_trivial(p, u_triv) == expected


class TestSolveSymbolic:
    def test_simple_fixture(self, simple_problem):
        spec, fam = simple_problem
        (sol,) = noether_solve(spec, fam)
        assert sol.status == "certified-global"
        assert sol.method == "noether"
        assert sol.states[0] == parse("t", spec.space)
        assert sol.controls[0] == Expr.const(1)
        assert sol.cost == Expr.const(1)
        assert sol.diagnostics["parameter"] == -1.0
        assert residuals(spec, sol) == (0.0, 0.0)

    def test_generic_endpoint_data(self):
        p, f = _generic_straight_line()
        (sol,) = noether_solve(p, f)
        sp = p.space
        assert sol.status == "certified-global"
        assert sol.controls[0] == parse("(beta - alpha)/(b - a)", sp)
        assert sol.states[0] == parse("alpha + (beta - alpha)/(b - a)*(t - a)", sp)
        assert sol.cost == parse("(beta - alpha)^2/(b - a)", sp)

    def test_rocket_fixture(self, rocket_problem):
        spec, fam = rocket_problem
        sols = noether_solve(spec, fam)
        assert len(sols) == 2  # one per sign of the fitted parameter
        for sol in sols:
            assert sol.status == "candidate"
            assert "unpinned boundary" in sol.diagnostics["certificate"]
            assert sol.states[0] == parse("-t^2 + 2*t - 1", spec.space)
            assert sol.states[1] == parse("-2*t + 2", spec.space)
            assert sol.controls[0] == Expr.const(-2)
            assert sol.cost == Expr.const(4)
            assert sol.diagnostics["parameter_squared"] == 2.0
            assert residuals(spec, sol) == (0.0, 0.0)

    def test_reported_cost_matches_the_trajectory(self, simple_problem, rocket_problem):
        for spec, fam in (simple_problem, rocket_problem):
            for sol in noether_solve(spec, fam):
                assert exact_cost(spec, sol.states, sol.controls) == sol.cost

    def test_nonzero_trivial_control(self):
        p = _scalar_problem("(u - 1)^2", "u", (("t0", 0, "0"), ("t1", 0, "1")))
        f = _shift_family(SP, ["x + s*t"], ["u + s"], "2*s*x + (s^2 - 2*s)*t")
        assert check_invariance(p, f).verdict
        (sol,) = noether_solve(p, f, u_triv=(Expr.const(1),))
        assert sol.status == "certified-global"
        assert sol.states[0] == parse("t", SP)
        assert sol.controls[0] == Expr.const(1)
        assert sol.cost == Expr.const(0)
        assert sol.diagnostics["parameter"] == 0.0

    def test_gauge_is_synthesized_when_missing(self, simple_problem):
        spec, fam = simple_problem
        bare = TransformFamily(
            space=fam.space, t_map=fam.t_map, x_maps=fam.x_maps, u_maps=fam.u_maps,
        )
        (sol,) = noether_solve(spec, bare)
        assert sol.status == "certified-global"
        assert sol.cost == Expr.const(1)

    def test_cubic_shift_solution(self):
        p = _scalar_problem("u^2", "u", (("t0", 0, "0"), ("t1", 0, "8")))
        f = _shift_family(SP, ["x + s^3*t"], ["u + s^3"], "s^6*t + 2*s^3*x")
        (sol,) = noether_solve(p, f)
        assert sol.status == "certified-global"
        assert sol.cost_float() == pytest.approx(64.0, abs=1e-8)
        dyn, bnd = residuals(p, sol)
        assert dyn <= 1e-10
        assert bnd <= 1e-10


class TestSolveNumeric:
    def test_forced_numeric_matches_symbolic_on_simple(self, simple_problem):
        spec, fam = simple_problem
        (sol,) = noether_solve(spec, fam, force_numeric=True, mesh=100)
        assert sol.status == "certified-global"
        assert not sol.has_closed_form
        assert sol.diagnostics["fit_mode"] == "numeric"
        assert sol.diagnostics["parameter"] == pytest.approx(-1.0, abs=1e-9)
        assert sol.cost_float() == pytest.approx(1.0, abs=1e-9)
        ts = sol.samples.times
        assert np.max(np.abs(sol.samples.states[:, 0] - ts)) <= 1e-9

    def test_forced_numeric_matches_symbolic_on_rocket(self, rocket_problem):
        spec, fam = rocket_problem
        sols = noether_solve(spec, fam, force_numeric=True, mesh=100)
        assert len(sols) == 2
        for sol in sols:
            ts = sol.samples.times
            assert np.max(np.abs(sol.samples.states[:, 0] - (-ts**2 + 2 * ts - 1))) <= 1e-9
            assert np.max(np.abs(sol.samples.states[:, 1] - (-2 * ts + 2))) <= 1e-9
            assert np.max(np.abs(sol.samples.controls[:, 0] + 2)) <= 1e-9
            assert sol.cost_float() == pytest.approx(4.0, abs=1e-9)
        params = sorted(s.diagnostics["parameter"] for s in sols)
        assert params == pytest.approx([-math.sqrt(2), math.sqrt(2)], abs=1e-9)
