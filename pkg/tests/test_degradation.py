"""Life-loss math: closed forms checked against independent numeric oracles."""

import math

import numpy as np
import pytest

from besstrack.degradation import (
    BatteryParams,
    CurveError,
    CycleLifeCurve,
    cycles_to_failure,
    fit_polynomial_curve,
    half_cycle_loss,
    loss_coefficient,
    primitive_loss,
    step_loss_exact,
)


def lfp_curve() -> CycleLifeCurve:
    """Bi-exponential fit for the case-study LFP cells."""
    return CycleLifeCurve.biexponential(49660.0, -14.32, 34280.0, -2.181)


def lfp_battery() -> BatteryParams:
    return BatteryParams(
        capacity_mwh=25.0,
        cost_total=1.285e7,
        p_discharge_max_mw=10.0,
        p_charge_max_mw=10.0,
        eta_discharge=1.05,
        eta_charge=0.95,
        soc_min=0.15,
        soc_max=0.85,
    )


def adaptive_simpson(f, a, b, tol=1e-13, depth=60):
    """Recursive adaptive Simpson quadrature (independent oracle)."""

    def simpson(lo, hi):
        mid = 0.5 * (lo + hi)
        return mid, (hi - lo) / 6.0 * (f(lo) + 4.0 * f(mid) + f(hi))

    def recurse(lo, hi, whole, m, eps, level):
        lm, left = simpson(lo, m)
        rm, right = simpson(m, hi)
        if level <= 0 or abs(left + right - whole) <= 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        return recurse(lo, m, left, lm, eps / 2.0, level - 1) + recurse(
            m, hi, right, rm, eps / 2.0, level - 1
        )

    if a == b:
        return 0.0
    m, whole = simpson(a, b)
    return recurse(a, b, whole, m, tol, depth)


class TestCycleLifeCurve:
    def test_biexp_at_zero_is_coefficient_sum(self):
        assert cycles_to_failure(lfp_curve(), 0.0) == pytest.approx(83940.0)

    def test_biexp_at_full_depth(self):
        # Frozen from a direct 64-bit evaluation of the bi-exponential.
        assert cycles_to_failure(lfp_curve(), 1.0) == pytest.approx(
            3871.220528962668, rel=1e-12
        )

    def test_constant_polynomial(self):
        curve = CycleLifeCurve.polynomial(1000.0, 0.0, 0.0, 0.0, 0.0)
        for d in (0.0, 0.3, 1.0):
            assert cycles_to_failure(curve, d) == 1000.0

    def test_domain_error(self):
        with pytest.raises(ValueError):
            cycles_to_failure(lfp_curve(), -0.1)
        with pytest.raises(ValueError):
            cycles_to_failure(lfp_curve(), 1.1)

    def test_rejects_increasing_curve(self):
        with pytest.raises(CurveError):
            CycleLifeCurve.polynomial(1000.0, 500.0, 0.0, 0.0, 0.0)

    def test_rejects_non_positive_curve(self):
        with pytest.raises(CurveError):
            CycleLifeCurve.polynomial(100.0, -200.0, 0.0, 0.0, 0.0)

    def test_rejects_oscillating_curve(self):
        # Dips then rises again inside [0, 1].
        with pytest.raises(CurveError):
            CycleLifeCurve.polynomial(1000.0, -400.0, 300.0, 0.0, 0.0)

    def test_rejects_bad_family(self):
        with pytest.raises(CurveError):
            CycleLifeCurve("spline", (1.0, 2.0))


class TestBatteryParams:
    def test_paper_parameters_accepted(self):
        lfp_battery()

    @pytest.mark.parametrize(
        "field,value",
        [
            ("capacity_mwh", 0.0),
            ("eta_charge", 1.2),
            ("eta_discharge", 0.9),
            ("soc_min", 0.9),
            ("p_discharge_max_mw", -1.0),
        ],
    )
    def test_invalid_parameters_rejected(self, field, value):
        kwargs = dict(
            capacity_mwh=25.0,
            cost_total=1.285e7,
            p_discharge_max_mw=10.0,
            p_charge_max_mw=10.0,
            eta_discharge=1.05,
            eta_charge=0.95,
            soc_min=0.15,
            soc_max=0.85,
        )
        kwargs[field] = value
        with pytest.raises(ValueError):
            BatteryParams(**kwargs)


class TestHalfCycleLoss:
    def test_full_soc(self):
        assert half_cycle_loss(lfp_curve(), 1.0) == pytest.approx(
            1.0 / (2.0 * 83940.0), rel=1e-12
        )

    def test_empty_soc_via_curve_oracle(self):
        curve = lfp_curve()
        expected = 1.0 / (2.0 * cycles_to_failure(curve, 1.0))
        assert half_cycle_loss(curve, 0.0) == pytest.approx(expected, rel=1e-12)

    def test_constant_curve(self):
        curve = CycleLifeCurve.polynomial(1000.0, 0.0, 0.0, 0.0, 0.0)
        assert half_cycle_loss(curve, 0.5) == pytest.approx(5e-4)


class TestLossCoefficient:
    def test_positive_for_decreasing_curve(self):
        curve, battery = lfp_curve(), lfp_battery()
        for s in np.linspace(0.0, 1.0, 21):
            assert loss_coefficient(curve, battery, float(s)) > 0.0

    def test_matches_finite_difference(self):
        # Central finite difference of 1/(2 C N(d)) with respect to depth of
        # discharge; loss_coefficient at s = 1-d must agree to 1e-6 relative.
        curve, battery = lfp_curve(), lfp_battery()
        h = 1e-6

        def half_loss_per_mwh(d):
            return 1.0 / (2.0 * battery.capacity_mwh * cycles_to_failure(curve, d))

        s = 0.5
        d = 1.0 - s
        fd = (half_loss_per_mwh(d + h) - half_loss_per_mwh(d - h)) / (2.0 * h)
        assert loss_coefficient(curve, battery, s) == pytest.approx(fd, rel=1e-6)

    def test_constant_curve_gives_zero(self):
        curve = CycleLifeCurve.polynomial(1000.0, 0.0, 0.0, 0.0, 0.0)
        battery = lfp_battery()
        for s in np.linspace(0.0, 1.0, 11):
            assert loss_coefficient(curve, battery, float(s)) == 0.0


class TestPrimitiveLoss:
    def test_zero_at_empty(self):
        assert primitive_loss(lfp_curve(), 0.0) == 0.0

    def test_full_range_value(self):
        curve = lfp_curve()
        expected = 0.5 * (1.0 / cycles_to_failure(curve, 1.0) - 1.0 / 83940.0)
        assert primitive_loss(curve, 1.0) == pytest.approx(expected, rel=1e-12)

    def test_matches_quadrature(self):
        # Closed form against adaptive Simpson integration of the loss density.
        curve, battery = lfp_curve(), lfp_battery()

        def density(s):
            return loss_coefficient(curve, battery, s) * battery.capacity_mwh

        for s in (0.1, 0.35, 0.5, 0.85, 1.0):
            numeric = adaptive_simpson(density, 0.0, s)
            assert primitive_loss(curve, s) == pytest.approx(numeric, abs=1e-12)

    def test_derivative_consistency(self):
        # dF/ds must equal the loss density at 101 interior grid points.
        curve, battery = lfp_curve(), lfp_battery()
        h = 1e-7
        for s in np.linspace(0.0 + h, 1.0 - h, 101):
            fd = (primitive_loss(curve, s + h) - primitive_loss(curve, s - h)) / (2.0 * h)
            expected = loss_coefficient(curve, battery, float(s)) * battery.capacity_mwh
            if abs(expected) < 1e-9:
                assert fd == pytest.approx(expected, abs=1e-12)
            else:
                assert fd == pytest.approx(expected, rel=1e-6)

    def test_monotone_non_decreasing(self):
        curve = lfp_curve()
        grid = np.linspace(0.0, 1.0, 201)
        values = [primitive_loss(curve, float(s)) for s in grid]
        assert all(b > a for a, b in zip(values, values[1:]))


class TestStepLoss:
    def test_no_change_no_loss(self):
        assert step_loss_exact(lfp_curve(), 0.4, 0.4) == 0.0

    def test_direction_symmetry(self):
        curve = lfp_curve()
        assert step_loss_exact(curve, 0.85, 0.15) == step_loss_exact(curve, 0.15, 0.85)

    def test_telescoping_over_subdivision(self):
        curve = lfp_curve()
        whole = step_loss_exact(curve, 0.2, 0.8)
        pieces = np.linspace(0.2, 0.8, 61)
        total = sum(
            step_loss_exact(curve, float(a), float(b))
            for a, b in zip(pieces, pieces[1:])
        )
        assert total == pytest.approx(whole, abs=1e-15 * 60)

    def test_round_trip_identity(self):
        # Loss of the excursion 1 -> 1-D -> 1 equals 1/N(D) - 1/N(0) exactly.
        curve = lfp_curve()
        for depth in np.arange(0.1, 1.01, 0.1):
            depth = float(depth)
            loss = 2.0 * (primitive_loss(curve, 1.0) - primitive_loss(curve, 1.0 - depth))
            identity = 1.0 / cycles_to_failure(curve, depth) - 1.0 / 83940.0
            assert loss == pytest.approx(identity, abs=1e-15)


class TestPolynomialFit:
    def test_exact_recovery(self):
        target = (5000.0, -4000.0, 500.0, -150.0, 50.0)
        dod = [0.05, 0.3, 0.5, 0.75, 0.95]
        samples = [
            (d, sum(c * d**k for k, c in enumerate(target))) for d in dod
        ]
        fitted = fit_polynomial_curve(samples)
        assert fitted.coeffs == pytest.approx(target, rel=1e-8)

    def test_noisy_samples_fit_beats_perturbations(self):
        target = (80000.0, -150000.0, 120000.0, -50000.0, 4000.0)
        rng = np.random.default_rng(11)
        dod = np.linspace(0.05, 1.0, 12)
        samples = [
            (float(d), sum(c * d**k for k, c in enumerate(target)) * (1.0 + e))
            for d, e in zip(dod, rng.normal(0.0, 5e-3, len(dod)))
        ]
        fitted = fit_polynomial_curve(samples)

        def residual_norm(coeffs):
            return math.sqrt(
                sum(
                    (sum(c * d**k for k, c in enumerate(coeffs)) - n) ** 2
                    for d, n in samples
                )
            )

        best = residual_norm(fitted.coeffs)
        for _ in range(50):
            perturbed = np.array(fitted.coeffs) * (1.0 + rng.normal(0.0, 1e-3, 5))
            assert residual_norm(tuple(perturbed)) >= best

    def test_oscillating_fit_rejected(self):
        # The best quartic through bi-exponential cycle data turns upward
        # near full depth; such fits are rejected rather than clamped.
        curve = lfp_curve()
        dod = np.arange(0.1, 1.01, 0.1)
        samples = [(float(d), cycles_to_failure(curve, float(d))) for d in dod]
        with pytest.raises(CurveError):
            fit_polynomial_curve(samples)

    def test_too_few_samples(self):
        samples = [(0.1, 900.0), (0.3, 700.0), (0.6, 400.0), (0.9, 200.0)]
        with pytest.raises(ValueError):
            fit_polynomial_curve(samples)

    def test_duplicate_dod_rejected(self):
        samples = [(0.2, 900.0)] * 5
        with pytest.raises(ValueError):
            fit_polynomial_curve(samples)
