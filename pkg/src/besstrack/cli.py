"""Command-line entry point.

Subcommands cover the whole workflow: fit a cycle-life curve from test
data, generate a synthetic day of series data, solve a single look-ahead
window, simulate a full period (optionally under both objective modes),
validate the linearization and cross-check a SOC trace against rainflow
counting, and plot a finished run.

Exit codes: 0 success, 2 configuration or data error, 3 infeasible
problem, 4 solver hit its search limit.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace

from .config import (
    ConfigError,
    RunConfig,
    check_series_against_config,
    load_config,
    write_default_config,
)
from .degradation import CurveError, fit_polynomial_curve, primitive_loss
from .horizon import (
    SimulationAborted,
    compare_cases,
    run_receding_horizon,
)
from .milp import ModelError
from .rainflow import compare_models
from .report import (
    ReportError,
    load_trajectory,
    render_plots,
    write_comparison,
    write_report,
)
from .timeseries import (
    TimeSeriesError,
    generate_synthetic_day,
    load_timeseries,
    save_timeseries,
)
from .tracking import (
    HorizonInput,
    InfeasibleHorizonError,
    TrackingError,
    evaluate_solution_cost,
    solve_horizon,
)
from . import pwl

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_LIMIT = 4


def _add_config_opt(parser, required=True):
    parser.add_argument("--config", metavar="PATH", required=required,
                        help="run configuration JSON")


def _add_model_opts(parser, modes=("case1", "case2")):
    parser.add_argument("--mode", choices=modes,
                        help="objective mode override")
    parser.add_argument("--lambda", dest="n_seg", type=int, metavar="N",
                        help="override the linearization segment count")
    parser.add_argument("--solver", choices=("reference", "external"),
                        default="reference",
                        help="MILP backend (default: reference)")


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    tracking = cfg.tracking
    simulation = cfg.simulation
    n_seg = getattr(args, "n_seg", None)
    if n_seg is not None:
        if n_seg < 1:
            raise ConfigError("--lambda must be at least 1")
        tracking = replace(tracking, n_seg=n_seg)
    mode = getattr(args, "mode", None)
    if mode is not None and mode != "both":
        tracking = replace(tracking, mode=mode)
        simulation = replace(simulation, mode=mode)
    return replace(cfg, tracking=tracking, simulation=simulation)


def _resolve(base_dir, path):
    if path is None or os.path.isabs(path):
        return path
    return os.path.join(base_dir, path)


def _load_series_trio(cfg: RunConfig, config_dir: str):
    """Load the three data files named by the config and cross-check them."""
    names = {
        "schedule": cfg.schedule_path,
        "wind_forecast": cfg.wind_forecast_path,
        "price": cfg.price_path,
    }
    missing = [k for k, v in names.items() if not v]
    if missing:
        raise ConfigError(
            f"config data section is missing paths for: {', '.join(missing)}")
    dt_min = round(cfg.tracking.dt * 60.0)
    loaded = {
        key: load_timeseries(_resolve(config_dir, path),
                             expected_step_min=dt_min)
        for key, path in names.items()
    }
    trio = (loaded["schedule"], loaded["wind_forecast"], loaded["price"])
    check_series_against_config(cfg, *trio)
    return trio


def _ensure_out_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {path}: {exc}")
    return path


def cmd_init_config(args):
    write_default_config(args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_fit(args):
    samples = []
    try:
        handle = open(args.samples, newline="")
    except OSError as exc:
        raise ConfigError(f"cannot open samples file {args.samples}: {exc}")
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["dod", "cycles"]:
            raise ConfigError(
                f"{args.samples}: header must be 'dod,cycles'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ConfigError(
                    f"{args.samples}:{lineno}: expected 2 columns")
            try:
                samples.append((float(row[0]), float(row[1])))
            except ValueError:
                raise ConfigError(
                    f"{args.samples}:{lineno}: non-numeric entry {row!r}")
    try:
        curve = fit_polynomial_curve(samples)
    except CurveError as exc:
        raise ConfigError(f"fit rejected: {exc}")
    worst = max(abs(curve.value(d) - n) / n for d, n in samples)
    block = {"family": "poly", "a": list(curve.coeffs)}
    text = json.dumps(block, indent=2)
    if args.out:
        with open(args.out, "w") as out:
            out.write(text + "\n")
        print(f"wrote {args.out}", file=sys.stderr)
    else:
        print(text)
    print(f"fit over {len(samples)} samples, worst relative error "
          f"{worst:.3e}", file=sys.stderr)
    return EXIT_OK


def cmd_gen_data(args):
    out_dir = _ensure_out_dir(args.out)
    p_sch, p_wind, c_e = generate_synthetic_day(
        seed=args.seed, n_steps=args.steps, deviation_mw=args.deviation)
    files = {
        "p_sch.csv": (p_sch, "day-ahead scheduled output"),
        "p_wind_f.csv": (p_wind, "intra-day wind power forecast"),
        "c_e.csv": (c_e, "time-of-use energy price"),
    }
    for name, (series, _) in files.items():
        save_timeseries(series, os.path.join(out_dir, name))
    schema = {
        "step_minutes": p_sch.step_minutes,
        "files": {
            name: {"columns": ["timestamp", "value"], "unit": series.unit,
                   "description": desc}
            for name, (series, desc) in files.items()
        },
    }
    schema_path = os.path.join(out_dir, "series_schema.json")
    with open(schema_path, "w") as handle:
        json.dump(schema, handle, indent=2)
        handle.write("\n")
    for name in list(files) + ["series_schema.json"]:
        print(os.path.join(out_dir, name))
    return EXIT_OK


def cmd_solve_one(args):
    cfg = _apply_overrides(load_config(args.config), args)
    config_dir = os.path.dirname(os.path.abspath(args.config))
    p_sch, p_wind, c_e = _load_series_trio(cfg, config_dir)
    index = args.index if args.index is not None else cfg.simulation.start_index
    nh = cfg.tracking.n_steps
    if index < 0 or index + nh > len(p_sch):
        raise ConfigError(
            f"index {index} leaves no room for a {nh}-step window in "
            f"{len(p_sch)} rows")
    inp = HorizonInput.from_arrays(
        cfg.simulation.soc_initial,
        p_sch.values[index:index + nh],
        p_wind.values[index:index + nh],
        c_e.values[index:index + nh])
    sol = solve_horizon(cfg.tracking, cfg.battery, cfg.curve, inp,
                        options=cfg.solver, backend=args.solver)
    cost = evaluate_solution_cost(sol, cfg.battery, cfg.curve, inp.c_e,
                                  cfg.tracking)
    payload = {
        "index": index,
        "mode": cfg.tracking.mode,
        "objective": sol.objective,
        "bess_life_loss_cost": cost.bess_exact,
        "out_of_limit_penalty": cost.penalty,
        "gap": sol.gap,
        "node_count": sol.node_count,
        "suboptimal": sol.suboptimal,
        "p_dis": list(sol.p_dis),
        "p_ch": list(sol.p_ch),
        "p_joint": list(sol.p_joint),
        "soc": list(sol.soc),
        "p_out_lower": list(sol.p_out_lower),
        "p_out_upper": list(sol.p_out_upper),
    }
    print(json.dumps(payload, indent=2))
    return EXIT_LIMIT if sol.suboptimal else EXIT_OK


def cmd_simulate(args):
    cfg = _apply_overrides(load_config(args.config), args)
    config_dir = os.path.dirname(os.path.abspath(args.config))
    p_sch, p_wind, c_e = _load_series_trio(cfg, config_dir)
    out_dir = _ensure_out_dir(args.out)
    sim = cfg.simulation
    start, step_min = p_sch.start, p_sch.step_minutes

    if args.mode == "both":
        cmp = compare_cases(sim, p_sch.values, p_wind.values, c_e.values,
                            cfg.tracking, cfg.battery, cfg.curve,
                            options=cfg.solver, backend=args.solver)
        path = write_comparison(cmp, out_dir, currency=cfg.currency)
        reports = {"case1": cmp.case_full, "case2": cmp.case_penalty_only}
        for label, rep in reports.items():
            sub = _ensure_out_dir(os.path.join(out_dir, label))
            write_report(rep, sub, start, step_min, currency=cfg.currency)
        with open(path) as handle:
            print(handle.read(), end="")
        bad = any(r.suboptimal for rep in reports.values()
                  for r in rep.records)
        return EXIT_LIMIT if bad else EXIT_OK

    report = run_receding_horizon(
        sim, p_sch.values, p_wind.values, c_e.values, cfg.tracking,
        cfg.battery, cfg.curve, options=cfg.solver, backend=args.solver,
        audit_dominance=args.audit)
    _, json_path = write_report(report, out_dir, start, step_min,
                                currency=cfg.currency)
    with open(json_path) as handle:
        print(handle.read(), end="")
    if any(r.suboptimal for r in report.records):
        print("warning: some solves stopped at the node limit",
              file=sys.stderr)
        return EXIT_LIMIT
    return EXIT_OK


def cmd_validate(args):
    cfg = _apply_overrides(load_config(args.config), args)
    expansion = pwl.build_expansion(
        lambda s: primitive_loss(cfg.curve, s),
        cfg.battery.soc_min, cfg.battery.soc_max, cfg.tracking.n_seg,
        big_m=cfg.tracking.big_m, eps_plus=cfg.tracking.eps_plus)
    nodes = expansion.breakpoints()
    worst = pwl.max_abs_error(
        expansion, lambda s: primitive_loss(cfg.curve, s), 2001)
    lines = ["segment,soc_lo,soc_hi,slope"]
    for k in range(expansion.n_seg):
        lines.append(f"{k + 1},{nodes[k]!r},{nodes[k + 1]!r},"
                     f"{expansion.slopes[k]!r}")
    table = "\n".join(lines) + "\n"
    print(f"linearization over [{cfg.battery.soc_min}, "
          f"{cfg.battery.soc_max}] with {expansion.n_seg} segments")
    print(f"max deviation from the closed-form primitive: {worst:.6e}")
    print(table, end="")
    if args.out:
        out_dir = _ensure_out_dir(args.out)
        with open(os.path.join(out_dir, "pwl_report.csv"), "w") as handle:
            handle.write(table)

    if args.soc_csv:
        series = load_timeseries(args.soc_csv)
        result = compare_models(series.values, cfg.curve, cfg.battery)
        payload = {
            "linear_model_loss": result.linear_loss,
            "rainflow_loss": result.rainflow_loss,
            "linear_model_cost": result.linear_cost,
            "rainflow_cost": result.rainflow_cost,
            "full_cycles": [[d, c] for d, c in result.cycles.full],
            "half_cycles": [[d, c] for d, c in result.cycles.half],
            "round_trip_offset": result.round_trip_offset,
            "note": result.note,
        }
        text = json.dumps(payload, indent=2)
        print(text)
        if args.out:
            path = os.path.join(args.out, "rainflow_comparison.json")
            with open(path, "w") as handle:
                handle.write(text + "\n")
    return EXIT_OK


def cmd_plot(args):
    cfg = _apply_overrides(load_config(args.config), args)
    out_dir = _ensure_out_dir(args.out)
    c_e_values = None
    if cfg.price_path:
        config_dir = os.path.dirname(os.path.abspath(args.config))
        price = load_timeseries(_resolve(config_dir, cfg.price_path))
        data = load_trajectory(args.trajectory)
        offset = (data["timestamp"][0] - price.start)
        steps = offset.total_seconds() / 60.0 / price.step_minutes
        if steps >= 0 and abs(steps - round(steps)) < 1e-9:
            k0 = int(round(steps))
            c_e_values = price.values[k0:k0 + len(data["timestamp"])]
    for path in render_plots(args.trajectory, out_dir,
                             battery=cfg.battery, curve=cfg.curve,
                             params=cfg.tracking, c_e_values=c_e_values,
                             currency=cfg.currency):
        print(path)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="besstrack",
        description="Battery-assisted wind schedule tracking with "
                    "degradation-aware dispatch.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-config",
                       help="write a default configuration file")
    p.add_argument("--out", metavar="PATH", default="besstrack.json")
    p.set_defaults(func=cmd_init_config)

    p = sub.add_parser("fit",
                       help="fit a quartic cycle-life curve from test data")
    p.add_argument("samples", metavar="CSV",
                   help="file with header 'dod,cycles'")
    p.add_argument("--out", metavar="PATH",
                   help="write the curve JSON here instead of stdout")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("gen-data", help="generate a synthetic day of data")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=104,
                   help="rows per series (default 104: a 96-step day plus "
                        "a 2-hour look-ahead tail)")
    p.add_argument("--deviation", type=float, default=6.0,
                   help="wind deviation scale in MW")
    p.add_argument("--out", metavar="DIR", default=".")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("solve-one", help="solve a single look-ahead window")
    _add_config_opt(p)
    _add_model_opts(p)
    p.add_argument("--index", type=int,
                   help="series index of the window start "
                        "(default: the configured start)")
    p.set_defaults(func=cmd_solve_one)

    p = sub.add_parser("simulate", help="run a full receding-horizon period")
    _add_config_opt(p)
    _add_model_opts(p, modes=("case1", "case2", "both"))
    p.add_argument("--audit", action="store_true",
                   help="per step, also solve the penalty-only variant and "
                        "record both plans' full-objective costs")
    p.add_argument("--out", metavar="DIR", default="out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser(
        "validate",
        help="report the linearization and optionally cross-check a SOC "
             "trace against rainflow counting")
    _add_config_opt(p)
    p.add_argument("soc_csv", nargs="?", metavar="SOC_CSV",
                   help="optional SOC trajectory series to cross-check")
    p.add_argument("--lambda", dest="n_seg", type=int, metavar="N")
    p.add_argument("--out", metavar="DIR")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("plot", help="draw the three standard charts")
    p.add_argument("trajectory", metavar="TRAJECTORY_CSV")
    _add_config_opt(p)
    p.add_argument("--out", metavar="DIR", default=".")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TimeSeriesError, ReportError, CurveError,
            ModelError, TrackingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleHorizonError, SimulationAborted) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
