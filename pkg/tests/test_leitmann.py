"""Tests for the coordinate-transformation solver and its functional
identity checker."""

from __future__ import annotations

import pytest

from symoc import check_functional_identity, leitmann_solve, noether_solve
from symoc.errors import SolverError, UnsupportedError
from symoc.expr import Expr, VarSpace, parse
from symoc.leitmann import LeitmannTransform, find_transform
from symoc.problem import BoundaryPin, ProblemSpec, residuals

SP = VarSpace(states=("x",), controls=("u",))


def _scalar_problem(L, dyn="u", pins=(("t0", 0, "0"), ("t1", 0, "1")),
                    horizon=("0", "1"), sp=SP):
    return ProblemSpec(
        space=sp,
        lagrangian=parse(L, sp),
        dynamics=(parse(dyn, sp),),
        horizon=(parse(horizon[0], sp), parse(horizon[1], sp)),
        boundary=tuple(BoundaryPin(e, i, parse(v, sp)) for e, i, v in pins),
    )


def _generic_problem():
    sp = VarSpace(states=("x",), controls=("u",),
                  coefficients=frozenset({"a", "b", "alpha", "beta"}))
    return ProblemSpec(
        space=sp,
        lagrangian=parse("u^2", sp),
        dynamics=(parse("u", sp),),
        horizon=(parse("a", sp), parse("b", sp)),
        boundary=(
            BoundaryPin("t0", 0, parse("alpha", sp)),
            BoundaryPin("t1", 0, parse("beta", sp)),
        ),
    )


class TestFindTransform:
    def test_simple_fixture(self, simple_problem):
        spec, _ = simple_problem
        tr = find_transform(spec)
        assert tr.sign == 1
        assert tr.f == parse("t", spec.space)
        assert tr.gauge == parse("2*x + t", spec.space)

    def test_generic_endpoint_data(self):
        p = _generic_problem()
        sp = p.space
        tr = find_transform(p)
        slope = "(beta - alpha)/(b - a)"
        assert tr.f == parse(f"alpha + {slope}*(t - a)", sp)
        assert tr.gauge == parse(f"2*{slope}*x + ({slope})^2*t", sp)

    def test_coincident_pins_give_constant_shift(self):
        p = _scalar_problem("u^2", pins=(("t0", 0, "3"), ("t1", 0, "3")))
        tr = find_transform(p)
        assert tr.f == Expr.const(3)
        assert tr.gauge.is_zero

    def test_second_derivative_free_along_straight_lines(self, simple_problem):
        spec, _ = simple_problem
        f = find_transform(spec).f
        assert f.diff("t").diff("t").is_zero


class TestFunctionalIdentity:
    def test_found_transform_verifies(self, simple_problem):
        spec, _ = simple_problem
        ok, res = check_functional_identity(spec, find_transform(spec))
        assert ok
        assert res.is_zero

    def test_perturbed_gauge_fails_with_residual(self, simple_problem):
        spec, _ = simple_problem
        tr = find_transform(spec)
        bad = LeitmannTransform(sign=tr.sign, f=tr.f,
                                gauge=tr.gauge + parse("x^2", spec.space))
        ok, res = check_functional_identity(spec, bad)
        assert not ok
        assert res == parse("-2*x*u", spec.space)

    def test_gauge_constant_offsets_are_invisible(self, simple_problem):
        spec, _ = simple_problem
        tr = find_transform(spec)
        shifted = LeitmannTransform(sign=tr.sign, f=tr.f,
                                    gauge=tr.gauge + Expr.const(5))
        ok, res = check_functional_identity(spec, shifted)
        assert ok
        assert res.is_zero

    def test_identity_transform(self):
        p = _scalar_problem("u^2", pins=(("t0", 0, "0"), ("t1", 0, "0")))
        tr = LeitmannTransform(sign=1, f=Expr.const(0), gauge=Expr.const(0))
        ok, res = check_functional_identity(p, tr)
        assert ok
        assert res.is_zero

    def test_mirrored_identity_transform(self):
        p = _scalar_problem("u^2")
        tr = LeitmannTransform(sign=-1, f=Expr.const(0), gauge=Expr.const(0))
        ok, _ = check_functional_identity(p, tr)
        assert ok


class TestSolve:
    def test_simple_fixture(self, simple_problem):
        spec, _ = simple_problem
        sol = leitmann_solve(spec)
        assert sol.status == "certified-global"
        assert sol.method == "leitmann"
        assert sol.states[0] == parse("t", spec.space)
        assert sol.controls[0] == Expr.const(1)
        assert sol.cost == Expr.const(1)
        assert sol.diagnostics["sign"] == 1
        assert residuals(spec, sol) == (0.0, 0.0)

    def test_agrees_with_the_symmetry_route(self, simple_problem):
        spec, fam = simple_problem
        a = leitmann_solve(spec)
        (b,) = noether_solve(spec, fam)
        assert a.states[0] == b.states[0]
        assert a.controls[0] == b.controls[0]
        assert a.cost == b.cost

    def test_agrees_symbolically_on_generic_data(self):
        p = _generic_problem()
        sp = p.space
        sol = leitmann_solve(p)
        assert sol.status == "certified-global"
        assert sol.states[0] == parse("alpha + (beta - alpha)/(b - a)*(t - a)", sp)
        assert sol.cost == parse("(beta - alpha)^2/(b - a)", sp)

    @pytest.mark.parametrize(
        "a, b, alpha, beta",
        [("0", "1", "0", "1"), ("1", "3", "2", "5"), ("0", "2", "1", "0")],
    )
    def test_route_agreement_on_rational_instances(self, a, b, alpha, beta):
        from symoc import TransformFamily

        p = _scalar_problem("u^2", pins=(("t0", 0, alpha), ("t1", 0, beta)),
                            horizon=(a, b))
        fam = TransformFamily(
            space=SP,
            t_map=parse("t", SP),
            x_maps=(parse("x + s*t", SP),),
            u_maps=(parse("u + s", SP),),
            gauge=parse("s^2*t + 2*s*x", SP),
        )
        lsol = leitmann_solve(p)
        (nsol,) = noether_solve(p, fam)
        assert lsol.states[0] == nsol.states[0]
        assert lsol.controls[0] == nsol.controls[0]
        assert lsol.cost == nsol.cost

    def test_unabsorbed_state_term_demotes_the_status(self):
        # the state appears in the running cost beyond the shift's reach, so
        # the shifted trajectory is feasible but carries no global guarantee
        p = _scalar_problem("u^2 + 6*t*x")
        sol = leitmann_solve(p)
        assert sol.status == "candidate"
        assert sol.cost == Expr.const(3)
        tr = find_transform(p)
        ok, _ = check_functional_identity(p, tr)
        assert ok

    def test_null_state_term_transforms_exactly(self):
        # x^2 u integrates to x^3/3 along any trajectory, so the identity
        # holds with cross terms cancelling exactly
        p = _scalar_problem("u^2 + x^2*u")
        sol = leitmann_solve(p)
        assert sol.status == "candidate"
        assert sol.states[0] == parse("t", SP)
        assert sol.cost == parse("4/3", SP)
        ok, res = check_functional_identity(p, find_transform(p))
        assert ok
        assert res.is_zero

    def test_quadratic_state_term_with_rest_pins(self):
        p = _scalar_problem("u^2 + x^2", pins=(("t0", 0, "0"), ("t1", 0, "0")))
        sol = leitmann_solve(p)
        assert sol.status == "candidate"
        assert sol.states[0].is_zero
        assert sol.cost == Expr.const(0)

    def test_weighted_cost_with_coincident_pins(self):
        p = _scalar_problem("(1 + t)*u^2", pins=(("t0", 0, "2"), ("t1", 0, "2")))
        sol = leitmann_solve(p)
        assert sol.states[0] == Expr.const(2)
        assert sol.controls[0].is_zero
        assert sol.cost == Expr.const(0)


class TestOutOfScope:
    def test_degree_exhaustion_reports_cleanly(self):
        with pytest.raises(SolverError) as exc:
            leitmann_solve(_scalar_problem("u^2 + x^2"))
        assert "no polynomial transform" in str(exc.value)

    def test_weighted_cost_with_distinct_pins_has_no_polynomial_shift(self):
        with pytest.raises(SolverError):
            leitmann_solve(_scalar_problem("(1 + t)*u^2"))

    def test_two_states_rejected(self, rocket_problem):
        spec, _ = rocket_problem
        with pytest.raises(UnsupportedError):
            leitmann_solve(spec)

    def test_scaled_dynamics_rejected(self):
        with pytest.raises(UnsupportedError):
            leitmann_solve(_scalar_problem("u^2", dyn="2*u"))

    def test_cubic_control_rejected(self):
        with pytest.raises(UnsupportedError):
            leitmann_solve(_scalar_problem("u^3"))

    def test_state_weighted_velocity_rejected(self):
        with pytest.raises(UnsupportedError):
            leitmann_solve(_scalar_problem("x*u^2"))

    def test_unpinned_state_rejected(self):
        with pytest.raises(UnsupportedError):
            leitmann_solve(_scalar_problem("u^2", pins=(("t0", 0, "0"),)))

    def test_cubic_state_term_is_a_nonlinear_identity(self):
        with pytest.raises(UnsupportedError) as exc:
            leitmann_solve(_scalar_problem("u^2 + x^3"))
        assert "state-coupled" in str(exc.value)

    def test_vanishing_velocity_weight_rejected(self):
        with pytest.raises(SolverError) as exc:
            leitmann_solve(_scalar_problem("t*u^2"))
        assert "vanishes" in str(exc.value)

    def test_symbolic_horizon_with_varying_weight_rejected(self):
        sp = VarSpace(states=("x",), controls=("u",),
                      coefficients=frozenset({"a", "b"}))
        p = ProblemSpec(
            space=sp,
            lagrangian=parse("(1 + t)*u^2", sp),
            dynamics=(parse("u", sp),),
            horizon=(parse("a", sp), parse("b", sp)),
            boundary=(
                BoundaryPin("t0", 0, Expr.const(0)),
                BoundaryPin("t1", 0, Expr.const(1)),
            ),
        )
        with pytest.raises(UnsupportedError):
            leitmann_solve(p)
