"""BESS life-loss modelling and schedule-tracking optimization."""

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
from besstrack.milp import (
    BINARY,
    CONTINUOUS,
    MilpModel,
    MilpSolution,
    ModelError,
    SolveOptions,
    SolveStatus,
    solve,
)
from besstrack.pwl import (
    PwlBlock,
    PwlError,
    PwlExpansion,
    build_expansion,
    check_fill_order,
    emit_constraints,
    eval_interpolant,
    max_abs_error,
)
from besstrack.tracking import (
    CASE_FULL,
    CASE_PENALTY_ONLY,
    CostBreakdown,
    HorizonInput,
    HorizonSolution,
    InfeasibleHorizonError,
    TrackingError,
    TrackingParams,
    build_horizon_model,
    evaluate_solution_cost,
    solve_horizon,
)
from besstrack.horizon import (
    CaseComparison,
    SimulationAborted,
    SimulationConfig,
    SimulationReport,
    StepRecord,
    compare_cases,
    run_receding_horizon,
    update_soc,
)
from besstrack.rainflow import (
    CycleSet,
    ModelComparison,
    compare_models,
    extract_extrema,
    life_loss_rainflow,
    rainflow_count,
)
from besstrack.timeseries import (
    TimeSeries,
    TimeSeriesError,
    generate_synthetic_day,
    load_timeseries,
    moving_average_schedule,
    save_timeseries,
)
from besstrack.config import (
    ConfigError,
    RunConfig,
    check_series_against_config,
    default_config_dict,
    load_config,
    write_default_config,
)
from besstrack.report import (
    ReportError,
    load_trajectory,
    render_plots,
    write_comparison,
    write_report,
)

__version__ = "0.1.0"

__all__ = [
    "BINARY",
    "CASE_FULL",
    "CASE_PENALTY_ONLY",
    "CONTINUOUS",
    "BatteryParams",
    "CaseComparison",
    "ConfigError",
    "CostBreakdown",
    "CurveError",
    "CycleLifeCurve",
    "CycleSet",
    "HorizonInput",
    "HorizonSolution",
    "InfeasibleHorizonError",
    "MilpModel",
    "MilpSolution",
    "ModelComparison",
    "ModelError",
    "PwlBlock",
    "PwlError",
    "PwlExpansion",
    "ReportError",
    "RunConfig",
    "SimulationAborted",
    "SimulationConfig",
    "SimulationReport",
    "SolveOptions",
    "SolveStatus",
    "StepRecord",
    "TimeSeries",
    "TimeSeriesError",
    "TrackingError",
    "TrackingParams",
    "build_expansion",
    "build_horizon_model",
    "check_fill_order",
    "check_series_against_config",
    "compare_cases",
    "compare_models",
    "cycles_to_failure",
    "default_config_dict",
    "emit_constraints",
    "eval_interpolant",
    "evaluate_solution_cost",
    "extract_extrema",
    "fit_polynomial_curve",
    "generate_synthetic_day",
    "half_cycle_loss",
    "life_loss_rainflow",
    "load_config",
    "load_timeseries",
    "load_trajectory",
    "loss_coefficient",
    "max_abs_error",
    "moving_average_schedule",
    "primitive_loss",
    "rainflow_count",
    "render_plots",
    "run_receding_horizon",
    "save_timeseries",
    "solve",
    "solve_horizon",
    "step_loss_exact",
    "update_soc",
    "write_comparison",
    "write_default_config",
    "write_report",
]
