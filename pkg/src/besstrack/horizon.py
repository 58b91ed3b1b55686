"""Receding-horizon simulation over a full scheduling period.

Each applied step solves the look-ahead MILP from :mod:`besstrack.tracking`,
applies only the first-step battery commands, advances the state of charge,
and moves the window one step forward.  Realized costs are settled on the
applied step only (the rest of each horizon is a planning artifact) and the
wear part uses the closed-form primitive, not the solver's linearization —
settlement should not depend on approximation granularity, so the PWL-based
number is carried along purely as a diagnostic.

The realized wind defaults to the short-term forecast series, matching a
setup where tracking is driven by the freshest forecast; pass
``p_wind_actual`` to settle against a separate realization.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Sequence

from .degradation import BatteryParams, CycleLifeCurve, primitive_loss, step_loss_exact
from .milp import SolveOptions
from .tracking import (
    CASE_FULL,
    CASE_PENALTY_ONLY,
    HorizonInput,
    InfeasibleHorizonError,
    TrackingError,
    TrackingParams,
    evaluate_solution_cost,
    solve_horizon,
)
from . import pwl


class SimulationAborted(RuntimeError):
    """A horizon solve failed mid-run; carries the step and its input."""

    def __init__(self, step_index: int, inp: HorizonInput, reason: str):
        self.step_index = step_index
        self.horizon_input = inp
        super().__init__(
            f"tracking infeasible at applied step {step_index}: {reason}\n"
            f"  soc_init={inp.soc_init}\n"
            f"  p_sch={list(inp.p_sch)}\n"
            f"  p_wind_f={list(inp.p_wind_f)}\n"
            f"  c_e={list(inp.c_e)}"
        )


@dataclass(frozen=True)
class SimulationConfig:
    """Which slice of the data to run and from which battery state."""

    start_index: int = 0
    n_steps: int = 96
    soc_initial: float = 0.5
    mode: str = CASE_FULL

    def __post_init__(self):
        if self.start_index < 0:
            raise TrackingError("start index must be nonnegative")
        if self.n_steps < 1:
            raise TrackingError("need at least one applied step")
        if self.mode not in (CASE_FULL, CASE_PENALTY_ONLY):
            raise TrackingError(f"unknown objective mode {self.mode!r}")


@dataclass
class StepRecord:
    """Applied first-step outcome of one receding-horizon solve."""

    index: int
    p_sch: float
    p_wind_f: float
    p_dis: float
    p_ch: float
    p_joint: float
    soc: float
    p_out_lower: float
    p_out_upper: float
    l_loss_model: float
    l_loss_exact: float
    cost_bess: float
    cost_penalty: float
    objective: float
    gap: float
    node_count: int
    wall_time_s: float
    suboptimal: bool
    # Filled only by dominance-audited runs: this step's chosen plan and a
    # wear-blind (penalty-only) plan from the same state, both priced under
    # the full wear-plus-penalty objective.
    audit_plan_cost: float | None = None
    audit_wear_blind_cost: float | None = None


@dataclass
class SimulationTotals:
    """The five headline indices of a run."""

    total_cost: float
    bess_cost: float
    penalty_cost: float
    throughput_mwh: float
    out_of_limit_mwh: float


@dataclass
class SimulationReport:
    records: list[StepRecord]
    totals: SimulationTotals
    mode: str
    soc_final: float
    bess_cost_model: float  # PWL-priced wear, diagnostic only


def update_soc(
    s_prev: float,
    p_dis: float,
    p_ch: float,
    battery: BatteryParams,
    dt: float,
    tol: float = 1e-7,
) -> float:
    """Advance the stored-energy fraction by one applied step.

    Raises if the result leaves the operating window by more than ``tol``
    — that means the applied powers were not actually feasible.
    """
    s = (s_prev
         - battery.eta_discharge * p_dis * dt / battery.capacity_mwh
         + battery.eta_charge * p_ch * dt / battery.capacity_mwh)
    if s < battery.soc_min - tol or s > battery.soc_max + tol:
        raise TrackingError(
            f"updated SOC {s} left the operating window "
            f"[{battery.soc_min}, {battery.soc_max}]"
        )
    return s


def summarize(records: Sequence[StepRecord], dt: float) -> SimulationTotals:
    """Fold per-step records into the headline totals."""
    if not records:
        raise TrackingError("cannot summarize an empty run")
    bess = sum(r.cost_bess for r in records)
    penalty = sum(r.cost_penalty for r in records)
    throughput = sum((r.p_dis + r.p_ch) * dt for r in records)
    out_energy = sum((r.p_out_lower + r.p_out_upper) * dt for r in records)
    return SimulationTotals(
        total_cost=bess + penalty,
        bess_cost=bess,
        penalty_cost=penalty,
        throughput_mwh=throughput,
        out_of_limit_mwh=out_energy,
    )


def run_receding_horizon(
    config: SimulationConfig,
    p_sch: Sequence[float],
    p_wind_f: Sequence[float],
    c_e: Sequence[float],
    params: TrackingParams,
    battery: BatteryParams,
    curve: CycleLifeCurve,
    options: SolveOptions | None = None,
    backend: str = "reference",
    p_wind_actual: Sequence[float] | None = None,
    audit_dominance: bool = False,
) -> SimulationReport:
    """Simulate the whole period, one applied step per solve.

    With ``audit_dominance`` every step additionally solves the
    penalty-only variant from the identical state and stores both
    horizon solutions' full-objective costs on the record, so a run can
    certify that pricing wear never produced a worse combined plan.
    """
    nh = params.n_steps
    needed = config.start_index + config.n_steps + nh
    for name, series in (("p_sch", p_sch), ("p_wind_f", p_wind_f),
                         ("c_e", c_e)):
        if len(series) < needed:
            raise TrackingError(
                f"{name} has {len(series)} samples; the run needs "
                f"{needed} (applied steps plus look-ahead)"
            )
    wind_real = p_wind_f if p_wind_actual is None else p_wind_actual
    if len(wind_real) < config.start_index + config.n_steps:
        raise TrackingError("realized wind series shorter than the run")

    run_params = replace(params, mode=config.mode)
    expansion = pwl.build_expansion(
        lambda s: primitive_loss(curve, s),
        battery.soc_min, battery.soc_max, run_params.n_seg,
        big_m=run_params.big_m, eps_plus=run_params.eps_plus,
    )

    records: list[StepRecord] = []
    s = config.soc_initial
    for i in range(config.n_steps):
        t = config.start_index + i
        inp = HorizonInput.from_arrays(
            s, p_sch[t:t + nh], p_wind_f[t:t + nh], c_e[t:t + nh])
        begin = time.perf_counter()
        try:
            sol = solve_horizon(run_params, battery, curve, inp,
                                options=options, backend=backend)
        except InfeasibleHorizonError as exc:
            raise SimulationAborted(t, inp, str(exc)) from exc
        wall = time.perf_counter() - begin

        plan_cost = blind_cost = None
        if audit_dominance:
            pen_params = replace(run_params, mode=CASE_PENALTY_ONLY)
            pen_sol = solve_horizon(pen_params, battery, curve, inp,
                                    options=options, backend=backend)
            full_params = replace(run_params, mode=CASE_FULL)
            plan_cost = evaluate_solution_cost(
                sol, battery, curve, inp.c_e, full_params).total_model
            blind_cost = evaluate_solution_cost(
                pen_sol, battery, curve, inp.c_e, full_params).total_model

        p_d = float(sol.p_dis[0])
        p_c = float(sol.p_ch[0])
        joint = float(wind_real[t]) + p_d - p_c
        out_lo = max(0.0, (1.0 - run_params.lambda_lower) * p_sch[t] - joint)
        out_up = max(0.0, joint - (1.0 + run_params.lambda_upper) * p_sch[t])
        s_next = update_soc(s, p_d, p_c, battery, run_params.dt)
        l_exact = step_loss_exact(curve, s, s_next)
        l_model = abs(pwl.eval_interpolant(expansion, s_next)
                      - pwl.eval_interpolant(expansion, s))
        penalty = run_params.dt * c_e[t] * (
            run_params.gamma_lower * out_lo
            + run_params.gamma_upper * out_up)
        records.append(StepRecord(
            index=t,
            p_sch=float(p_sch[t]),
            p_wind_f=float(p_wind_f[t]),
            p_dis=p_d,
            p_ch=p_c,
            p_joint=joint,
            soc=s_next,
            p_out_lower=out_lo,
            p_out_upper=out_up,
            l_loss_model=l_model,
            l_loss_exact=l_exact,
            cost_bess=battery.cost_total * l_exact,
            cost_penalty=penalty,
            objective=sol.objective,
            gap=sol.gap,
            node_count=sol.node_count,
            wall_time_s=wall,
            suboptimal=sol.suboptimal,
            audit_plan_cost=plan_cost,
            audit_wear_blind_cost=blind_cost,
        ))
        # The applied value is authoritative; keep the state inside the
        # window against accumulated rounding.
        s = min(max(s_next, battery.soc_min), battery.soc_max)

    totals = summarize(records, run_params.dt)
    return SimulationReport(
        records=records,
        totals=totals,
        mode=config.mode,
        soc_final=s,
        bess_cost_model=battery.cost_total * sum(
            r.l_loss_model for r in records),
    )


@dataclass
class CaseComparison:
    """Same data run under both objectives, for side-by-side reporting."""

    case_full: SimulationReport
    case_penalty_only: SimulationReport

    def summary(self) -> dict:
        def row(report: SimulationReport) -> dict:
            return {
                "out_of_limit_penalty": report.totals.penalty_cost,
                "bess_life_loss_cost": report.totals.bess_cost,
                "cost_sum": report.totals.total_cost,
            }

        return {
            "with_life_loss_cost": row(self.case_full),
            "penalty_only": row(self.case_penalty_only),
        }


def compare_cases(
    config: SimulationConfig,
    p_sch: Sequence[float],
    p_wind_f: Sequence[float],
    c_e: Sequence[float],
    params: TrackingParams,
    battery: BatteryParams,
    curve: CycleLifeCurve,
    options: SolveOptions | None = None,
    backend: str = "reference",
    p_wind_actual: Sequence[float] | None = None,
) -> CaseComparison:
    """Run the period once per objective mode from the same start state."""
    reports = {}
    for mode in (CASE_FULL, CASE_PENALTY_ONLY):
        cfg = replace(config, mode=mode)
        reports[mode] = run_receding_horizon(
            cfg, p_sch, p_wind_f, c_e, params, battery, curve,
            options=options, backend=backend, p_wind_actual=p_wind_actual)
    return CaseComparison(case_full=reports[CASE_FULL],
                          case_penalty_only=reports[CASE_PENALTY_ONLY])
