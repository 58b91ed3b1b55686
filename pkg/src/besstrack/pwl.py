"""Piecewise-linear expansion of a scalar function with ordered segment fill.

A function f on [y_lo, y_hi] is replaced by uniform-width segments filled
in order: segment k may only receive length once segments 1..k-1 are
(numerically) full.  The ordering is enforced with one binary per segment
and big-M constraints, so the expansion can be embedded in a MILP while
staying equal to the plain interpolant of f at the breakpoints up to a
small slack controlled by ``eps_plus``.

The deterministic evaluator (`eval_interpolant`) and the constraint
emitter (`emit_constraints`) are two views of the same expansion; tests
hold them together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from . import milp


class PwlError(ValueError):
    """Invalid expansion parameters, domain violations, or bound mismatches."""


@dataclass(frozen=True)
class PwlExpansion:
    """Uniform piecewise-linear expansion of a function on [y_lo, y_hi].

    ``slopes[k]`` is the secant slope of the wrapped function over segment
    k+1; ``big_m`` and ``eps_plus`` parameterize the MILP fill-order
    constraints (see `emit_constraints`).
    """

    y_lo: float
    y_hi: float
    n_seg: int
    seg_width: float
    f_lo: float
    slopes: tuple[float, ...]
    big_m: float
    eps_plus: float

    def __post_init__(self):
        if self.seg_width <= 0.0:
            raise PwlError("segment width must be positive")
        if len(self.slopes) != self.n_seg:
            raise PwlError("need one slope per segment")
        if self.big_m < self.seg_width:
            raise PwlError("big_m must be at least the segment width")
        if not 0.0 < self.eps_plus < self.seg_width:
            raise PwlError("eps_plus must lie strictly between 0 and the segment width")

    def breakpoints(self) -> list[float]:
        return [self.y_lo + k * self.seg_width for k in range(self.n_seg + 1)]


@dataclass
class PwlBlock:
    """Handles returned by `emit_constraints`.

    The linearized function value is the affine expression
    ``f_offset + sum(f_coeffs[v] * value(v))`` over the model's variables.
    """

    f_coeffs: dict[int, float]
    f_offset: float
    seg_vars: list[int]
    bin_vars: list[int]
    constraint_ids: list[int]


def build_expansion(
    f_eval: Callable[[float], float],
    y_lo: float,
    y_hi: float,
    n_seg: int,
    big_m: float | None = None,
    eps_plus: float | None = None,
) -> PwlExpansion:
    """Sample ``f_eval`` at uniform breakpoints and build the expansion.

    Defaults: ``big_m`` equals the segment width (the tightest value that
    deactivates the fill-order constraint when the next segment is
    unused), ``eps_plus`` is 1e-6 of the segment width.
    """
    if not y_lo < y_hi:
        raise PwlError(f"invalid domain [{y_lo}, {y_hi}]")
    if n_seg < 1:
        raise PwlError("need at least one segment")
    width = (y_hi - y_lo) / n_seg
    values = [f_eval(y_lo + k * width) for k in range(n_seg + 1)]
    slopes = tuple((values[k + 1] - values[k]) / width for k in range(n_seg))
    return PwlExpansion(
        y_lo=float(y_lo),
        y_hi=float(y_hi),
        n_seg=int(n_seg),
        seg_width=width,
        f_lo=float(values[0]),
        slopes=slopes,
        big_m=width if big_m is None else float(big_m),
        eps_plus=1e-6 * width if eps_plus is None else float(eps_plus),
    )


def eval_interpolant(exp: PwlExpansion, y: float) -> float:
    """Interpolant value at ``y`` under the in-order fill assignment."""
    if not exp.y_lo <= y <= exp.y_hi:
        raise PwlError(f"{y} outside expansion domain [{exp.y_lo}, {exp.y_hi}]")
    offset = y - exp.y_lo
    k = min(exp.n_seg - 1, int(offset // exp.seg_width))
    total = exp.f_lo
    for j in range(k):
        total += exp.slopes[j] * exp.seg_width
    total += exp.slopes[k] * (offset - k * exp.seg_width)
    return total


def max_abs_error(
    exp: PwlExpansion, f_eval: Callable[[float], float], grid_n: int
) -> float:
    """Largest |interpolant - f| over a uniform grid of ``grid_n`` points."""
    if grid_n < 2:
        raise PwlError("grid_n must be at least 2")
    worst = 0.0
    for i in range(grid_n):
        y = exp.y_lo + (exp.y_hi - exp.y_lo) * i / (grid_n - 1)
        y = min(y, exp.y_hi)
        worst = max(worst, abs(eval_interpolant(exp, y) - f_eval(y)))
    return worst


def check_fill_order(
    exp: PwlExpansion,
    seg_values: Sequence[float],
    bin_values: Sequence[float],
    tol: float = 1e-9,
) -> tuple[bool, str | None]:
    """Verify a (segment, binary) assignment against the fill-order rules.

    Returns ``(True, None)`` on success, otherwise ``(False, message)``
    describing the first violated condition (segments are reported
    1-based).  Purely diagnostic: never raises for bad assignments, only
    for wrong vector lengths.
    """
    if len(seg_values) != exp.n_seg or len(bin_values) != exp.n_seg:
        raise PwlError("assignment vectors must have one entry per segment")
    width = exp.seg_width
    for k in range(exp.n_seg):
        d = seg_values[k]
        x = float(bin_values[k])
        if d < -tol:
            return False, f"segment {k + 1}: negative fill {d}"
        if d > x * width + tol:
            return False, f"segment {k + 1}: fill {d} exceeds activation bound"
    for k in range(exp.n_seg - 1):
        x_next = float(bin_values[k + 1])
        required = width - (1.0 - x_next) * exp.big_m - exp.eps_plus
        if seg_values[k] < required - tol:
            return False, (
                f"segment {k + 1}: fill {seg_values[k]} below {required} "
                "while the next segment is active"
            )
    for k in range(exp.n_seg - 1):
        if float(bin_values[k + 1]) > float(bin_values[k]) + tol:
            return False, f"segment {k + 2}: active before segment {k + 1}"
    return True, None


def emit_constraints(
    exp: PwlExpansion, model: milp.MilpModel, y_var: int
) -> PwlBlock:
    """Append the mixed-integer fill-order block for ``y_var`` to ``model``.

    Adds one bounded segment variable and one binary per segment plus the
    coupling row tying their sum to ``y_var``.  Earlier segments receive
    higher branch priority since their binaries dominate the fill order.
    """
    lo = model.lower[y_var]
    hi = model.upper[y_var]
    if lo < exp.y_lo - 1e-12 or hi > exp.y_hi + 1e-12:
        raise PwlError(
            f"variable bounds [{lo}, {hi}] exceed expansion domain "
            f"[{exp.y_lo}, {exp.y_hi}]"
        )
    base = model.names[y_var]
    seg_vars = [
        model.add_variable(0.0, exp.seg_width, name=f"{base}_seg{k + 1}")
        for k in range(exp.n_seg)
    ]
    bin_vars = [
        model.add_variable(0.0, 1.0, milp.BINARY, name=f"{base}_fill{k + 1}")
        for k in range(exp.n_seg)
    ]
    for k, b in enumerate(bin_vars):
        model.set_branch_priority(b, exp.n_seg - k)

    cons: list[int] = []
    coupling = {v: 1.0 for v in seg_vars}
    coupling[y_var] = -1.0
    cons.append(model.add_constraint(coupling, "==", -exp.y_lo))
    for k in range(exp.n_seg):
        cons.append(
            model.add_constraint(
                {seg_vars[k]: 1.0, bin_vars[k]: -exp.seg_width}, "<=", 0.0
            )
        )
    for k in range(exp.n_seg - 1):
        # fill(k) >= width - (1 - active(k+1)) * big_m - eps_plus
        cons.append(
            model.add_constraint(
                {seg_vars[k]: 1.0, bin_vars[k + 1]: -exp.big_m},
                ">=",
                exp.seg_width - exp.big_m - exp.eps_plus,
            )
        )
    f_coeffs = {seg_vars[k]: exp.slopes[k] for k in range(exp.n_seg)}
    return PwlBlock(
        f_coeffs=f_coeffs,
        f_offset=exp.f_lo,
        seg_vars=seg_vars,
        bin_vars=bin_vars,
        constraint_ids=cons,
    )
