"""Tests for the ordered-fill piecewise linearization."""

import math

import numpy as np
import pytest
from scipy.optimize import linprog

from besstrack import milp
from besstrack.degradation import CycleLifeCurve, primitive_loss
from besstrack.pwl import (
    PwlError,
    build_expansion,
    check_fill_order,
    emit_constraints,
    eval_interpolant,
    max_abs_error,
)

SOC_LO, SOC_HI = 0.15, 0.85


def lfp_curve():
    return CycleLifeCurve.biexponential(49660.0, -14.32, 34280.0, -2.181)


def wear_primitive():
    curve = lfp_curve()
    return lambda s: primitive_loss(curve, s)


class TestBuildExpansion:
    def test_linear_function_all_unit_slopes(self):
        exp = build_expansion(lambda y: y, 0.0, 1.0, 4)
        assert exp.slopes == pytest.approx((1.0, 1.0, 1.0, 1.0), abs=1e-15)
        assert exp.seg_width == pytest.approx(0.25, abs=1e-15)

    def test_operating_window_width(self):
        exp = build_expansion(wear_primitive(), SOC_LO, SOC_HI, 10)
        assert exp.seg_width == pytest.approx(0.07, abs=1e-15)
        assert exp.n_seg == 10

    def test_single_segment_is_secant(self):
        f = wear_primitive()
        exp = build_expansion(f, SOC_LO, SOC_HI, 1)
        secant = (f(SOC_HI) - f(SOC_LO)) / (SOC_HI - SOC_LO)
        assert exp.slopes[0] == pytest.approx(secant, rel=1e-14)

    def test_default_big_m_and_eps(self):
        exp = build_expansion(lambda y: y, 0.0, 1.0, 5)
        assert exp.big_m == exp.seg_width
        assert exp.eps_plus == pytest.approx(1e-6 * exp.seg_width, rel=1e-12)

    def test_invalid_domain(self):
        with pytest.raises(PwlError):
            build_expansion(lambda y: y, 1.0, 1.0, 4)
        with pytest.raises(PwlError):
            build_expansion(lambda y: y, 2.0, 1.0, 4)

    def test_bad_segment_count(self):
        with pytest.raises(PwlError):
            build_expansion(lambda y: y, 0.0, 1.0, 0)

    def test_big_m_below_width_rejected(self):
        with pytest.raises(PwlError):
            build_expansion(lambda y: y, 0.0, 1.0, 4, big_m=0.1)

    def test_eps_outside_open_interval_rejected(self):
        with pytest.raises(PwlError):
            build_expansion(lambda y: y, 0.0, 1.0, 4, eps_plus=0.0)
        with pytest.raises(PwlError):
            build_expansion(lambda y: y, 0.0, 1.0, 4, eps_plus=0.25)


class TestInterpolant:
    def test_exact_at_breakpoints(self):
        f = wear_primitive()
        exp = build_expansion(f, SOC_LO, SOC_HI, 10)
        for y in exp.breakpoints():
            assert eval_interpolant(exp, y) == pytest.approx(f(y), abs=1e-15)

    def test_lower_end_returns_f_lo(self):
        exp = build_expansion(wear_primitive(), SOC_LO, SOC_HI, 10)
        assert eval_interpolant(exp, SOC_LO) == exp.f_lo

    def test_segment_midpoint_is_endpoint_mean(self):
        f = wear_primitive()
        exp = build_expansion(f, SOC_LO, SOC_HI, 10)
        left = SOC_LO + 2 * exp.seg_width
        right = SOC_LO + 3 * exp.seg_width
        mid = 0.5 * (left + right)
        assert eval_interpolant(exp, mid) == pytest.approx(
            0.5 * (f(left) + f(right)), abs=1e-12
        )

    def test_outside_domain_raises(self):
        exp = build_expansion(wear_primitive(), SOC_LO, SOC_HI, 10)
        with pytest.raises(PwlError):
            eval_interpolant(exp, 0.1)
        with pytest.raises(PwlError):
            eval_interpolant(exp, 0.9)


class TestMaxAbsError:
    def test_linear_function_zero_error(self):
        exp = build_expansion(lambda y: 3.0 * y - 1.0, 0.0, 1.0, 7)
        assert max_abs_error(exp, lambda y: 3.0 * y - 1.0, 501) <= 1e-14

    def test_refinement_does_not_increase_error(self):
        f = wear_primitive()
        coarse = build_expansion(f, SOC_LO, SOC_HI, 10)
        fine = build_expansion(f, SOC_LO, SOC_HI, 20)
        err_coarse = max_abs_error(coarse, f, 2001)
        err_fine = max_abs_error(fine, f, 2001)
        assert err_fine <= err_coarse + 1e-18

    def test_small_grid_rejected(self):
        exp = build_expansion(wear_primitive(), SOC_LO, SOC_HI, 10)
        with pytest.raises(PwlError):
            max_abs_error(exp, wear_primitive(), 1)

    def test_reference_error_magnitude(self):
        # Regression pin for the default 10-segment operating window.
        f = wear_primitive()
        exp = build_expansion(f, SOC_LO, SOC_HI, 10)
        err = max_abs_error(exp, f, 10001)
        assert 0.0 < err < 1e-5


class TestFillOrderCheck:
    def make(self, n_seg=4):
        return build_expansion(wear_primitive(), SOC_LO, SOC_HI, n_seg)

    def test_all_full_passes(self):
        exp = self.make()
        ok, msg = check_fill_order(
            exp, [exp.seg_width] * 4, [1.0] * 4
        )
        assert ok and msg is None

    def test_out_of_order_fill_fails_at_first_segment(self):
        exp = self.make()
        ok, msg = check_fill_order(
            exp, [0.0, exp.seg_width, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0]
        )
        assert not ok
        assert "segment 1" in msg

    def test_activation_gap_fails(self):
        exp = self.make()
        ok, msg = check_fill_order(
            exp, [0.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]
        )
        assert not ok

    def test_partial_prefix_passes(self):
        exp = self.make()
        ok, msg = check_fill_order(
            exp,
            [exp.seg_width, 0.3 * exp.seg_width, 0.0, 0.0],
            [1.0, 1.0, 0.0, 0.0],
        )
        assert ok, msg

    def test_in_order_assignment_always_feasible(self):
        # Constructive feasibility: fill segments in order for many targets.
        exp = self.make(6)
        for frac in np.linspace(0.0, 1.0, 37):
            y = SOC_LO + frac * (SOC_HI - SOC_LO)
            remaining = y - SOC_LO
            fills, bins = [], []
            for _ in range(exp.n_seg):
                take = min(exp.seg_width, max(0.0, remaining))
                fills.append(take)
                bins.append(1.0 if take > 0.0 else 0.0)
                remaining -= take
            ok, msg = check_fill_order(exp, fills, bins, tol=1e-12)
            assert ok, f"y={y}: {msg}"
            assert sum(fills) == pytest.approx(y - SOC_LO, abs=1e-12)

    def test_wrong_length_raises(self):
        exp = self.make()
        with pytest.raises(PwlError):
            check_fill_order(exp, [0.0] * 3, [0.0] * 4)


def enumerate_block_range(exp, y):
    """Min and max of the linearized value over all binary patterns at fixed y.

    Independent of the MILP layer: each pattern becomes a small LP over the
    segment fills, solved with scipy.
    """
    n = exp.n_seg
    lo_f, hi_f = math.inf, -math.inf
    for mask in range(2 ** n):
        x = [(mask >> k) & 1 for k in range(n)]
        bounds = [(0.0, x[k] * exp.seg_width) for k in range(n)]
        a_ub, b_ub = [], []
        for k in range(n - 1):
            # -fill_k - big_m*x_{k+1} <= -(width - big_m - eps)
            row = [0.0] * n
            row[k] = -1.0
            a_ub.append(row)
            b_ub.append(-(exp.seg_width - (1 - x[k + 1]) * exp.big_m
                          - exp.eps_plus))
        a_eq = [[1.0] * n]
        b_eq = [y - exp.y_lo]
        for sign in (1.0, -1.0):
            res = linprog(
                [sign * s for s in exp.slopes],
                A_ub=np.array(a_ub) if a_ub else None,
                b_ub=np.array(b_ub) if b_ub else None,
                A_eq=np.array(a_eq),
                b_eq=np.array(b_eq),
                bounds=bounds,
                method="highs",
            )
            if res.status == 0:
                val = exp.f_lo + float(np.dot(exp.slopes, res.x))
                lo_f = min(lo_f, val)
                hi_f = max(hi_f, val)
    return lo_f, hi_f


class TestConstraintBlock:
    def test_single_segment_block_shape(self):
        exp = build_expansion(wear_primitive(), SOC_LO, SOC_HI, 1)
        model = milp.MilpModel()
        y = model.add_variable(SOC_LO, SOC_HI, name="soc")
        block = emit_constraints(exp, model, y)
        assert len(block.seg_vars) == 1
        assert len(block.bin_vars) == 1
        # coupling + one activation bound, no fill-order rows
        assert len(block.constraint_ids) == 2

    def test_bound_mismatch_rejected(self):
        exp = build_expansion(wear_primitive(), SOC_LO, SOC_HI, 4)
        model = milp.MilpModel()
        y = model.add_variable(0.0, 1.0, name="soc")
        with pytest.raises(PwlError):
            emit_constraints(exp, model, y)

    def test_every_feasible_value_near_interpolant(self):
        # All binary patterns, fixed y: the linearized value is pinned to
        # the interpolant within a slack proportional to eps_plus.
        exp = build_expansion(wear_primitive(), SOC_LO, SOC_HI, 4)
        band = 10.0 * exp.eps_plus * max(abs(s) for s in exp.slopes)
        for y in (0.2, 0.33, 0.5, 0.62, 0.84):
            lo_f, hi_f = enumerate_block_range(exp, y)
            target = eval_interpolant(exp, y)
            assert lo_f >= target - band, f"y={y}"
            assert hi_f <= target + band, f"y={y}"

    def test_milp_minimum_matches_interpolant(self):
        exp = build_expansion(wear_primitive(), SOC_LO, SOC_HI, 4)
        band = 10.0 * exp.eps_plus * max(abs(s) for s in exp.slopes)
        for y_fix in (0.21, 0.47, 0.8):
            model = milp.MilpModel()
            y = model.add_variable(y_fix, y_fix, name="soc")
            block = emit_constraints(exp, model, y)
            model.set_objective(block.f_coeffs, offset=block.f_offset)
            sol = milp.solve(model)
            assert sol.status == milp.SolveStatus.OPTIMAL
            assert abs(sol.objective - eval_interpolant(exp, y_fix)) <= band

    def test_solver_assignment_passes_fill_check(self):
        exp = build_expansion(wear_primitive(), SOC_LO, SOC_HI, 5)
        model = milp.MilpModel()
        y = model.add_variable(0.4, 0.4, name="soc")
        block = emit_constraints(exp, model, y)
        model.set_objective(block.f_coeffs, offset=block.f_offset)
        sol = milp.solve(model)
        fills = [sol.values[v] for v in block.seg_vars]
        bins = [sol.values[v] for v in block.bin_vars]
        ok, msg = check_fill_order(exp, fills, bins, tol=1e-6)
        assert ok, msg

    def test_activation_without_predecessor_infeasible(self):
        # Forcing segment 2 on while segment 1 is off contradicts the
        # fill-order rows regardless of y.
        exp = build_expansion(wear_primitive(), SOC_LO, SOC_HI, 4)
        model = milp.MilpModel()
        y = model.add_variable(SOC_LO, SOC_HI, name="soc")
        block = emit_constraints(exp, model, y)
        model.upper[block.bin_vars[0]] = 0.0
        model.lower[block.bin_vars[1]] = 1.0
        model.set_objective(block.f_coeffs, offset=block.f_offset)
        sol = milp.solve(model)
        assert sol.status == milp.SolveStatus.INFEASIBLE

    def test_external_backend_agrees(self):
        exp = build_expansion(wear_primitive(), SOC_LO, SOC_HI, 6)
        results = []
        for backend in ("reference", "external"):
            model = milp.MilpModel()
            y = model.add_variable(0.31, 0.31, name="soc")
            block = emit_constraints(exp, model, y)
            model.set_objective(block.f_coeffs, offset=block.f_offset)
            sol = milp.solve(model, backend=backend)
            assert sol.status == milp.SolveStatus.OPTIMAL
            results.append(sol.objective)
        assert results[0] == pytest.approx(results[1], abs=1e-9)
