"""Closed-form battery life-loss mathematics.

The cycle-life curve maps depth of discharge (DOD) to the number of full
discharge-charge cycles a battery survives.  From that curve this module
derives, in closed form:

* the life fraction consumed by a half cycle spanning ``[soc, 1]``,
* the life-loss coefficient per MWh of throughput at a given SOC,
* the primitive (antiderivative) of that coefficient, whose differences
  give the exact life loss of any unidirectional SOC step.

All functions are pure and all types immutable, so everything here is safe
for concurrent use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CycleLifeCurve",
    "BatteryParams",
    "cycles_to_failure",
    "half_cycle_loss",
    "loss_coefficient",
    "primitive_loss",
    "step_loss_exact",
    "fit_polynomial_curve",
]

_MONOTONICITY_GRID = 1001


class CurveError(ValueError):
    """Raised when a cycle-life curve violates its construction invariants."""


def _check_soc(value: float, name: str = "soc") -> float:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return float(value)


@dataclass(frozen=True)
class CycleLifeCurve:
    """Cycles-to-failure as a function of depth of discharge.

    Two fitted families are supported:

    * ``poly`` -- quartic polynomial with coefficients ``a[0] + a[1]*d + ...
      + a[4]*d**4``;
    * ``biexp`` -- sum of two exponentials ``b1*exp(c1*d) + b2*exp(c2*d)``
      (decaying curves have negative ``c1``/``c2``).

    Construction validates that the curve is positive and strictly
    decreasing on a 1001-point uniform grid over [0, 1]; curves that fail
    are rejected rather than clamped, because a non-monotone curve makes
    the loss coefficient change sign.
    """

    family: str
    coeffs: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.family not in ("poly", "biexp"):
            raise CurveError(f"unknown curve family {self.family!r}")
        n_expected = 5 if self.family == "poly" else 4
        if len(self.coeffs) != n_expected:
            raise CurveError(
                f"{self.family} curve needs {n_expected} coefficients, "
                f"got {len(self.coeffs)}"
            )
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        grid = np.linspace(0.0, 1.0, _MONOTONICITY_GRID)
        values = self._eval_array(grid)
        if not np.all(values > 0.0):
            raise CurveError("cycle-life curve must be positive on [0, 1]")
        if not np.all(np.diff(values) < 0.0):
            # A constant curve is tolerated (zero loss coefficient) but an
            # oscillating one is not.
            if np.any(np.diff(values) > 0.0):
                raise CurveError(
                    "cycle-life curve must be non-increasing on [0, 1]"
                )

    @classmethod
    def polynomial(cls, a0: float, a1: float, a2: float, a3: float, a4: float) -> "CycleLifeCurve":
        return cls("poly", (a0, a1, a2, a3, a4))

    @classmethod
    def biexponential(cls, b1: float, c1: float, b2: float, c2: float) -> "CycleLifeCurve":
        return cls("biexp", (b1, c1, b2, c2))

    def _eval_array(self, d: np.ndarray) -> np.ndarray:
        if self.family == "poly":
            return np.polynomial.polynomial.polyval(d, self.coeffs)
        b1, c1, b2, c2 = self.coeffs
        return b1 * np.exp(c1 * d) + b2 * np.exp(c2 * d)

    def value(self, d: float) -> float:
        """Cycles to failure at depth of discharge ``d``."""
        _check_soc(d, "depth of discharge")
        if self.family == "poly":
            a0, a1, a2, a3, a4 = self.coeffs
            return a0 + d * (a1 + d * (a2 + d * (a3 + d * a4)))
        b1, c1, b2, c2 = self.coeffs
        return b1 * math.exp(c1 * d) + b2 * math.exp(c2 * d)

    def derivative(self, d: float) -> float:
        """Analytic d(cycles)/d(DOD) at depth ``d``."""
        _check_soc(d, "depth of discharge")
        if self.family == "poly":
            _, a1, a2, a3, a4 = self.coeffs
            return a1 + d * (2.0 * a2 + d * (3.0 * a3 + d * 4.0 * a4))
        b1, c1, b2, c2 = self.coeffs
        return b1 * c1 * math.exp(c1 * d) + b2 * c2 * math.exp(c2 * d)


@dataclass(frozen=True)
class BatteryParams:
    """Static plant parameters of the storage system.

    ``capacity_mwh`` is the rated energy capacity, ``cost_total`` the total
    investment-plus-operation cost used to price life loss.  Efficiencies
    follow the convention that discharging drains ``eta_discharge`` times
    the delivered energy from the cells (so ``eta_discharge >= 1``) while
    charging stores ``eta_charge`` times the absorbed energy
    (``0 < eta_charge <= 1``).
    """

    capacity_mwh: float
    cost_total: float
    p_discharge_max_mw: float
    p_charge_max_mw: float
    eta_discharge: float
    eta_charge: float
    soc_min: float
    soc_max: float

    def __post_init__(self) -> None:
        if self.capacity_mwh <= 0:
            raise ValueError("capacity_mwh must be positive")
        if self.cost_total < 0:
            raise ValueError("cost_total must be non-negative")
        if self.p_discharge_max_mw < 0 or self.p_charge_max_mw < 0:
            raise ValueError("power limits must be non-negative")
        if not 0.0 < self.eta_charge <= 1.0:
            raise ValueError("eta_charge must lie in (0, 1]")
        if self.eta_discharge < 1.0:
            raise ValueError("eta_discharge must be >= 1")
        if not 0.0 <= self.soc_min < self.soc_max <= 1.0:
            raise ValueError("SOC bounds must satisfy 0 <= soc_min < soc_max <= 1")


def cycles_to_failure(curve: CycleLifeCurve, d: float) -> float:
    """Evaluate the cycle-life curve at depth of discharge ``d``."""
    return curve.value(d)


def half_cycle_loss(curve: CycleLifeCurve, soc: float) -> float:
    """Life fraction consumed by one half cycle spanning ``[soc, 1]``."""
    _check_soc(soc)
    return 1.0 / (2.0 * curve.value(1.0 - soc))


def loss_coefficient(curve: CycleLifeCurve, battery: BatteryParams, soc: float) -> float:
    """Life fraction consumed per MWh of throughput at state of charge ``soc``.

    Computed analytically as ``-N'(1 - soc) / (2 * C * N(1 - soc)**2)``
    where ``N`` is the cycle-life curve and ``C`` the rated capacity.  For
    strictly decreasing curves the value is positive.
    """
    _check_soc(soc)
    d = 1.0 - soc
    n = curve.value(d)
    return -curve.derivative(d) / (2.0 * battery.capacity_mwh * n * n)


def primitive_loss(curve: CycleLifeCurve, soc: float) -> float:
    """Primitive function of the life-loss density, evaluated at ``soc``.

    Closed form ``0.5 * (1/N(1) - 1/N(1 - soc))``; zero at ``soc = 0`` and
    non-decreasing.  The life loss of any unidirectional SOC step is the
    absolute difference of this primitive at the step endpoints.
    """
    _check_soc(soc)
    return 0.5 * (1.0 / curve.value(1.0) - 1.0 / curve.value(1.0 - soc))


def step_loss_exact(curve: CycleLifeCurve, soc_prev: float, soc_next: float) -> float:
    """Exact life loss of one unidirectional SOC step."""
    return abs(primitive_loss(curve, soc_next) - primitive_loss(curve, soc_prev))


def fit_polynomial_curve(samples: list[tuple[float, float]]) -> CycleLifeCurve:
    """Least-squares quartic fit of cycle-test data.

    ``samples`` are ``(dod, cycles)`` pairs; at least five distinct DOD
    values in [0, 1] with positive cycle counts are required.  The fitted
    polynomial must itself pass the curve construction invariants
    (positive, non-increasing); an oscillating fit raises ``CurveError``.
    """
    if len(samples) < 5:
        raise ValueError("need at least 5 samples to fit a quartic curve")
    dod = np.array([s[0] for s in samples], dtype=float)
    cycles = np.array([s[1] for s in samples], dtype=float)
    if np.any((dod < 0.0) | (dod > 1.0)):
        raise ValueError("sample DOD values must lie in [0, 1]")
    if np.any(cycles <= 0.0):
        raise ValueError("sample cycle counts must be positive")
    if len(np.unique(dod)) < 5:
        raise ValueError("need at least 5 distinct DOD values")
    design = np.vander(dod, 5, increasing=True)
    if np.linalg.matrix_rank(design) < 5:
        raise np.linalg.LinAlgError("design matrix is rank deficient")
    coeffs, *_ = np.linalg.lstsq(design, cycles, rcond=None)
    return CycleLifeCurve("poly", tuple(coeffs))
