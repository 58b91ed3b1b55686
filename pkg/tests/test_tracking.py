"""Tests for the single-horizon tracking MILP."""

import math

import numpy as np
import pytest

from besstrack import milp, pwl
from besstrack.degradation import BatteryParams, CycleLifeCurve, primitive_loss
from besstrack.tracking import (
    CASE_FULL,
    CASE_PENALTY_ONLY,
    HorizonInput,
    HorizonSolution,
    TrackingError,
    TrackingParams,
    build_horizon_model,
    evaluate_solution_cost,
    solve_horizon,
)


def lfp_curve():
    return CycleLifeCurve.biexponential(49660.0, -14.32, 34280.0, -2.181)


def farm_battery(p_dis_max=10.0, p_ch_max=10.0):
    return BatteryParams(
        capacity_mwh=25.0,
        cost_total=1.285e7,
        p_discharge_max_mw=p_dis_max,
        p_charge_max_mw=p_ch_max,
        eta_discharge=1.05,
        eta_charge=0.95,
        soc_min=0.15,
        soc_max=0.85,
    )


def single_step_params(mode=CASE_FULL, n_seg=10):
    return TrackingParams(horizon_h=0.25, dt=0.25, n_seg=n_seg, mode=mode)


def flat_input(n, soc=0.5, p_sch=50.0, p_wind=50.0, price=50.0):
    return HorizonInput.from_arrays(
        soc, [p_sch] * n, [p_wind] * n, [price] * n
    )


def step_cost_oracle(params, battery, curve, soc_init, p_sch, p_wind, price,
                     p_d, p_c):
    """Model objective of a single step at the given battery powers."""
    exp = pwl.build_expansion(
        lambda s: primitive_loss(curve, s), battery.soc_min, battery.soc_max,
        params.n_seg)
    a_dis = battery.eta_discharge * params.dt / battery.capacity_mwh
    a_ch = battery.eta_charge * params.dt / battery.capacity_mwh
    s1 = soc_init - a_dis * p_d + a_ch * p_c
    if not battery.soc_min - 1e-12 <= s1 <= battery.soc_max + 1e-12:
        return math.inf
    s1 = min(max(s1, battery.soc_min), battery.soc_max)
    wear = 0.0
    if params.mode == CASE_FULL:
        f0 = pwl.eval_interpolant(exp, soc_init)
        f1 = pwl.eval_interpolant(exp, s1)
        wear = battery.cost_total * abs(f1 - f0)
    joint = p_wind + p_d - p_c
    pen = params.dt * price * (
        params.gamma_lower
        * max(0.0, (1 - params.lambda_lower) * p_sch - joint)
        + params.gamma_upper
        * max(0.0, joint - (1 + params.lambda_upper) * p_sch)
    )
    return wear + pen


class TestModelShape:
    def test_counts_for_paper_horizon(self):
        params = TrackingParams()  # 2 h of 15-min steps
        assert params.n_steps == 8
        model, handles = build_horizon_model(
            params, farm_battery(), lfp_curve(), flat_input(8))
        assert len(handles.blocks) == 8
        n_binary = sum(1 for kind in model.integrality
                       if kind == milp.BINARY)
        assert n_binary == 8 * (params.n_seg + 2)

    def test_single_segment_model_still_solves(self):
        params = TrackingParams(horizon_h=0.5, dt=0.25, n_seg=1)
        sol = solve_horizon(params, farm_battery(), lfp_curve(),
                            flat_input(2, p_wind=40.0))
        assert sol.soc.shape == (2,)

    def test_series_length_mismatch(self):
        params = TrackingParams()
        bad = HorizonInput.from_arrays(0.5, [50.0] * 7, [50.0] * 8,
                                       [50.0] * 8)
        with pytest.raises(TrackingError):
            build_horizon_model(params, farm_battery(), lfp_curve(), bad)

    def test_negative_price_rejected(self):
        params = single_step_params()
        bad = HorizonInput.from_arrays(0.5, [50.0], [50.0], [-1.0])
        with pytest.raises(TrackingError):
            build_horizon_model(params, farm_battery(), lfp_curve(), bad)

    def test_soc_outside_window_rejected(self):
        params = single_step_params()
        bad = flat_input(1, soc=0.9)
        with pytest.raises(TrackingError):
            build_horizon_model(params, farm_battery(), lfp_curve(), bad)

    def test_bad_params(self):
        with pytest.raises(TrackingError):
            TrackingParams(horizon_h=2.0, dt=0.3)
        with pytest.raises(TrackingError):
            TrackingParams(lambda_lower=-0.1)
        with pytest.raises(TrackingError):
            TrackingParams(mode="case3")
        with pytest.raises(TrackingError):
            TrackingParams(n_seg=0)


class TestZeroDeviation:
    def test_matching_forecast_costs_nothing(self):
        params = TrackingParams(n_seg=4)
        sol = solve_horizon(params, farm_battery(), lfp_curve(),
                            flat_input(8))
        assert sol.objective == pytest.approx(0.0, abs=1e-9)
        assert np.all(sol.p_out_lower == 0.0)
        assert np.all(sol.p_out_upper == 0.0)

    def test_forecast_inside_band_costs_nothing(self):
        params = TrackingParams(n_seg=4)
        sol = solve_horizon(
            params, farm_battery(), lfp_curve(),
            flat_input(8, p_sch=50.0, p_wind=51.5))  # within the 5 % band
        assert sol.objective == pytest.approx(0.0, abs=1e-9)

    def test_penalty_only_mode_zero(self):
        params = TrackingParams(n_seg=4, mode=CASE_PENALTY_ONLY)
        sol = solve_horizon(params, farm_battery(), lfp_curve(),
                            flat_input(8))
        assert sol.objective == pytest.approx(0.0, abs=1e-9)


class TestSingleStepBruteForce:
    def test_discharge_vs_penalty_tradeoff(self):
        # Wind 5 MW below the band floor: either the battery bridges the
        # gap or the deficit is penalized.  A 0.01 MW grid brute-forces
        # the model objective over one-sided actions.
        params = single_step_params()
        battery = farm_battery(p_dis_max=5.0)
        curve = lfp_curve()
        inp = HorizonInput.from_arrays(0.5, [100.0], [90.0], [50.0])
        sol = solve_horizon(params, battery, curve, inp)

        best = math.inf
        for p_d in np.arange(0.0, 5.0 + 1e-9, 0.01):
            best = min(best, step_cost_oracle(
                params, battery, curve, 0.5, 100.0, 90.0, 50.0, p_d, 0.0))
        for p_c in np.arange(0.0, 10.0 + 1e-9, 0.01):
            best = min(best, step_cost_oracle(
                params, battery, curve, 0.5, 100.0, 90.0, 50.0, 0.0, p_c))
        # Solver works on the continuous problem, so it can only undercut
        # the grid, and by no more than one grid cell's worth of slope.
        assert sol.objective <= best + 1e-6
        assert best - sol.objective <= 2.0

    def test_charge_vs_penalty_tradeoff(self):
        params = single_step_params()
        battery = farm_battery()
        curve = lfp_curve()
        inp = HorizonInput.from_arrays(0.5, [100.0], [110.0], [50.0])
        sol = solve_horizon(params, battery, curve, inp)
        best = math.inf
        for p_c in np.arange(0.0, 10.0 + 1e-9, 0.01):
            best = min(best, step_cost_oracle(
                params, battery, curve, 0.5, 100.0, 110.0, 50.0, 0.0, p_c))
        for p_d in np.arange(0.0, 10.0 + 1e-9, 0.01):
            best = min(best, step_cost_oracle(
                params, battery, curve, 0.5, 100.0, 110.0, 50.0, p_d, 0.0))
        assert sol.objective <= best + 1e-6
        assert best - sol.objective <= 2.0

    def test_full_battery_cannot_absorb_excess(self):
        # At the top of the window with wind above the band, charging is
        # impossible and the whole excess is penalized.
        params = single_step_params()
        battery = farm_battery()
        inp = HorizonInput.from_arrays(0.85, [50.0], [60.0], [50.0])
        sol = solve_horizon(params, battery, lfp_curve(), inp)
        assert sol.p_ch[0] == pytest.approx(0.0, abs=1e-7)
        assert sol.p_out_upper[0] == pytest.approx(7.5, abs=1e-6)
        assert sol.objective == pytest.approx(7.5 * 50.0 * 0.25, abs=1e-4)


class TestSolutionStructure:
    def setup_method(self):
        self.params = TrackingParams(horizon_h=1.0, dt=0.25, n_seg=4)
        self.battery = farm_battery()
        self.curve = lfp_curve()
        self.inp = HorizonInput.from_arrays(
            0.5,
            [100.0, 100.0, 80.0, 80.0],
            [90.0, 104.0, 70.0, 92.0],
            [50.0, 60.0, 70.0, 50.0],
        )
        self.sol = solve_horizon(self.params, self.battery, self.curve,
                                 self.inp)

    def test_no_simultaneous_modes(self):
        assert not np.any(self.sol.v_dis & self.sol.v_ch)
        assert not np.any((self.sol.p_dis > 1e-7) & (self.sol.p_ch > 1e-7))

    def test_soc_recursion_holds(self):
        s = self.inp.soc_init
        a_dis = self.battery.eta_discharge * self.params.dt \
            / self.battery.capacity_mwh
        a_ch = self.battery.eta_charge * self.params.dt \
            / self.battery.capacity_mwh
        for t in range(self.params.n_steps):
            s = s - a_dis * self.sol.p_dis[t] + a_ch * self.sol.p_ch[t]
            assert self.sol.soc[t] == pytest.approx(s, abs=1e-7)
            assert self.battery.soc_min - 1e-9 <= s \
                <= self.battery.soc_max + 1e-9

    def test_joint_output_definition(self):
        joint = np.array(self.inp.p_wind_f) + self.sol.p_dis - self.sol.p_ch
        assert np.allclose(self.sol.p_joint, joint, atol=1e-9)

    def test_epigraph_values_reach_lower_envelope(self):
        # objective == recomputed wear + penalty up to the fill slack
        recomputed = self.sol.bess_cost + self.sol.penalty_cost
        assert self.sol.objective == pytest.approx(recomputed, abs=0.5)

    def test_deterministic_resolve(self):
        again = solve_horizon(self.params, self.battery, self.curve,
                              self.inp)
        assert np.array_equal(again.soc, self.sol.soc)
        assert again.objective == self.sol.objective
        assert again.node_count == self.sol.node_count


class TestCostEvaluation:
    def test_idle_solution_prices_to_zero(self):
        params = TrackingParams(n_seg=4)
        n = params.n_steps
        zeros = np.zeros(n)
        idle = HorizonSolution(
            v_dis=np.zeros(n, dtype=bool), v_ch=np.zeros(n, dtype=bool),
            p_dis=zeros, p_ch=zeros, p_joint=np.full(n, 50.0),
            soc=np.full(n, 0.5), p_out_lower=zeros, p_out_upper=zeros,
            l_loss_model=zeros, l_loss_exact=zeros,
            objective=0.0, bess_cost=0.0, penalty_cost=0.0,
            gap=0.0, node_count=1,
        )
        costs = evaluate_solution_cost(idle, farm_battery(), lfp_curve(),
                                       [50.0] * n, params)
        assert costs.total_model == 0.0
        assert costs.total_exact == 0.0

    def test_solver_zero_deviation_prices_near_zero(self):
        params = TrackingParams(n_seg=4)
        sol = solve_horizon(params, farm_battery(), lfp_curve(),
                            flat_input(8))
        costs = evaluate_solution_cost(sol, farm_battery(), lfp_curve(),
                                       [50.0] * 8, params)
        assert costs.total_model == pytest.approx(0.0, abs=1e-8)
        assert costs.total_exact == pytest.approx(0.0, abs=1e-8)
        assert costs.penalty == 0.0

    def test_total_is_sum_of_parts(self):
        params = TrackingParams(horizon_h=0.5, dt=0.25, n_seg=4)
        inp = HorizonInput.from_arrays(0.5, [100.0, 90.0], [90.0, 99.0],
                                       [55.0, 45.0])
        sol = solve_horizon(params, farm_battery(), lfp_curve(), inp)
        costs = evaluate_solution_cost(sol, farm_battery(), lfp_curve(),
                                       inp.c_e, params)
        assert costs.total_model == costs.bess_model + costs.penalty
        assert costs.total_exact == costs.bess_exact + costs.penalty

    def test_model_vs_exact_within_interpolation_bound(self):
        params = TrackingParams(horizon_h=1.0, dt=0.25, n_seg=10)
        battery = farm_battery()
        curve = lfp_curve()
        inp = HorizonInput.from_arrays(
            0.5, [100.0] * 4, [90.0, 108.0, 85.0, 95.0], [60.0] * 4)
        sol = solve_horizon(params, battery, curve, inp)
        costs = evaluate_solution_cost(sol, battery, curve, inp.c_e, params)
        exp = pwl.build_expansion(
            lambda s: primitive_loss(curve, s), battery.soc_min,
            battery.soc_max, params.n_seg)
        err = pwl.max_abs_error(exp, lambda s: primitive_loss(curve, s),
                                5001)
        bound = battery.cost_total * 2.0 * err * params.n_steps
        assert abs(costs.bess_model - costs.bess_exact) <= bound


class TestObjectiveDominance:
    def test_full_objective_no_worse_than_penalty_only(self):
        params_full = TrackingParams(horizon_h=1.0, dt=0.25, n_seg=4)
        params_pen = TrackingParams(horizon_h=1.0, dt=0.25, n_seg=4,
                                    mode=CASE_PENALTY_ONLY)
        battery = farm_battery()
        curve = lfp_curve()
        inp = HorizonInput.from_arrays(
            0.5,
            [100.0, 100.0, 90.0, 90.0],
            [92.0, 107.0, 82.0, 97.0],
            [60.0, 55.0, 70.0, 45.0],
        )
        sol_full = solve_horizon(params_full, battery, curve, inp)
        sol_pen = solve_horizon(params_pen, battery, curve, inp)
        full_cost = evaluate_solution_cost(sol_full, battery, curve,
                                           inp.c_e, params_full)
        pen_cost = evaluate_solution_cost(sol_pen, battery, curve,
                                          inp.c_e, params_full)
        assert full_cost.total_model <= pen_cost.total_model + 1e-6


class TestBackendAgreement:
    def test_reference_matches_external(self):
        params = TrackingParams(horizon_h=0.75, dt=0.25, n_seg=6)
        battery = farm_battery()
        curve = lfp_curve()
        inp = HorizonInput.from_arrays(
            0.4, [100.0, 95.0, 105.0], [91.0, 101.0, 98.0],
            [58.0, 62.0, 47.0])
        ref = solve_horizon(params, battery, curve, inp, backend="reference")
        ext = solve_horizon(params, battery, curve, inp, backend="external")
        assert ref.objective == pytest.approx(ext.objective, abs=0.05,
                                              rel=1e-6)
        assert np.allclose(ref.soc, ext.soc, atol=1e-4)
