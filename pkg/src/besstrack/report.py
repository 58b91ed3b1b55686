"""Result persistence and plotting for simulation runs.

A run produces two files: a per-step trajectory CSV and a totals JSON
carrying the five headline indices (total cost, wear cost, penalty cost,
battery throughput, out-of-limit energy) plus a diagnostics block.  A
case-pair run additionally produces a comparison JSON with four cost rows
per case.  Plotting works off the trajectory CSV alone, with optional
plant parameters to draw the diagnostic price curves.
"""

from __future__ import annotations

import csv
import json
from datetime import datetime, timedelta

import numpy as np

from .degradation import loss_coefficient
from .tracking import TrackingParams


class ReportError(RuntimeError):
    """Persistence failed or the input artifact is unusable."""


TRAJECTORY_COLUMNS = (
    "timestamp", "p_sch", "p_wind_f", "p_dis", "p_ch", "p_joint", "soc",
    "p_out_lower", "p_out_upper", "l_loss_exact", "step_cost",
)


def write_report(report, out_dir, series_start, step_minutes,
                 currency="currency units"):
    """Persist one run: ``trajectory.csv`` and ``totals.json``.

    Parameters
    ----------
    report : SimulationReport
    out_dir : str
        Existing directory to write into.
    series_start : datetime
        Timestamp of series index 0; record timestamps are offset from it.
    step_minutes : int
    currency : str
        Label echoed into the JSON; money columns carry no symbol.

    Returns
    -------
    (str, str)
        Paths of the CSV and the JSON.
    """
    csv_path = f"{out_dir}/trajectory.csv"
    json_path = f"{out_dir}/totals.json"
    step = timedelta(minutes=step_minutes)
    try:
        with open(csv_path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(TRAJECTORY_COLUMNS)
            for rec in report.records:
                stamp = series_start + rec.index * step
                writer.writerow([
                    stamp.isoformat(),
                    repr(rec.p_sch), repr(rec.p_wind_f),
                    repr(rec.p_dis), repr(rec.p_ch), repr(rec.p_joint),
                    repr(rec.soc),
                    repr(rec.p_out_lower), repr(rec.p_out_upper),
                    repr(rec.l_loss_exact),
                    repr(rec.cost_bess + rec.cost_penalty),
                ])
    except OSError as exc:
        raise ReportError(f"cannot write trajectory {csv_path}: {exc}")

    totals = report.totals
    payload = {
        "total_cost": totals.total_cost,
        "bess_life_loss_cost": totals.bess_cost,
        "out_of_limit_penalty": totals.penalty_cost,
        "throughput_mwh": totals.throughput_mwh,
        "out_of_limit_energy_mwh": totals.out_of_limit_mwh,
        "diagnostics": {
            "mode": report.mode,
            "currency": currency,
            "applied_steps": len(report.records),
            "soc_final": report.soc_final,
            "bess_life_loss_cost_model": report.bess_cost_model,
            "max_gap": max((r.gap for r in report.records), default=0.0),
            "total_nodes": sum(r.node_count for r in report.records),
            "total_wall_time_s": sum(r.wall_time_s for r in report.records),
            "suboptimal_steps": sum(1 for r in report.records if r.suboptimal),
        },
    }
    try:
        with open(json_path, "w") as handle:
            json.dump(payload, handle, indent=2)
            handle.write("\n")
    except OSError as exc:
        raise ReportError(f"cannot write totals {json_path}: {exc}")
    return csv_path, json_path


def write_comparison(comparison, out_dir, currency="currency units"):
    """Persist a case-pair run as ``comparison.json``.

    Each case carries four cost rows: the penalty, the wear cost priced by
    the closed-form primitive, the same wear priced by the solver's
    linearization, and the sum of penalty and closed-form wear.
    """
    path = f"{out_dir}/comparison.json"

    def rows(rep):
        return {
            "out_of_limit_penalty": rep.totals.penalty_cost,
            "bess_life_loss_cost": rep.totals.bess_cost,
            "bess_life_loss_cost_model": rep.bess_cost_model,
            "cost_sum": rep.totals.total_cost,
        }

    payload = {
        "currency": currency,
        "with_life_loss_cost": rows(comparison.case_full),
        "penalty_only": rows(comparison.case_penalty_only),
    }
    try:
        with open(path, "w") as handle:
            json.dump(payload, handle, indent=2)
            handle.write("\n")
    except OSError as exc:
        raise ReportError(f"cannot write comparison {path}: {exc}")
    return path


def load_trajectory(csv_path):
    """Read a trajectory CSV back into arrays.

    Returns a dict keyed by column name; ``timestamp`` maps to a list of
    datetimes, every other column to a float ndarray.
    """
    try:
        handle = open(csv_path, newline="")
    except OSError as exc:
        raise ReportError(f"cannot open trajectory {csv_path}: {exc}")
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ReportError(f"trajectory {csv_path} is empty")
        if tuple(header) != TRAJECTORY_COLUMNS:
            raise ReportError(
                f"trajectory {csv_path} has unexpected columns {header}")
        stamps = []
        numeric = [[] for _ in range(len(TRAJECTORY_COLUMNS) - 1)]
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(TRAJECTORY_COLUMNS):
                raise ReportError(
                    f"{csv_path}:{lineno}: expected "
                    f"{len(TRAJECTORY_COLUMNS)} columns, got {len(row)}")
            try:
                stamps.append(datetime.fromisoformat(row[0]))
                for slot, cell in zip(numeric, row[1:]):
                    slot.append(float(cell))
            except ValueError as exc:
                raise ReportError(f"{csv_path}:{lineno}: {exc}")
    if not stamps:
        raise ReportError(f"trajectory {csv_path} has no data rows")
    out = {"timestamp": stamps}
    for name, slot in zip(TRAJECTORY_COLUMNS[1:], numeric):
        out[name] = np.asarray(slot)
    return out


def render_plots(csv_path, out_dir, battery=None, curve=None, params=None,
                 c_e_values=None, currency="currency units"):
    """Draw the three standard charts from a trajectory CSV.

    * ``tracking.svg`` — schedule, tolerance band and joint output;
    * ``bess_power.svg`` — net battery power plus out-of-limit power;
    * ``soc_prices.svg`` — state of charge, and (when ``battery`` and
      ``curve`` are given) the wear price per MWh of throughput at the
      current state, against the penalty price if ``c_e_values`` is given.

    Returns the list of written file paths.  An empty trajectory raises
    before any file is created.
    """
    data = load_trajectory(csv_path)
    if params is None:
        params = TrackingParams()
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    hours = np.array([
        (t - data["timestamp"][0]).total_seconds() / 3600.0
        for t in data["timestamp"]
    ])
    written = []

    fig, ax = plt.subplots(figsize=(9, 4))
    band_lo = (1.0 - params.lambda_lower) * data["p_sch"]
    band_hi = (1.0 + params.lambda_upper) * data["p_sch"]
    ax.fill_between(hours, band_lo, band_hi, alpha=0.2, label="tolerance band")
    ax.plot(hours, data["p_sch"], "k--", lw=1.0, label="schedule")
    ax.plot(hours, data["p_joint"], lw=1.2, label="joint output")
    ax.set_xlabel("hours from start")
    ax.set_ylabel("power [MW]")
    ax.legend(loc="best")
    path = f"{out_dir}/tracking.svg"
    fig.savefig(path)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(9, 4))
    ax.plot(hours, data["p_dis"] - data["p_ch"], lw=1.2,
            label="BESS power (discharge +)")
    ax.plot(hours, data["p_out_upper"], lw=1.0, label="over-band power")
    ax.plot(hours, -data["p_out_lower"], lw=1.0, label="under-band power")
    ax.axhline(0.0, color="k", lw=0.5)
    ax.set_xlabel("hours from start")
    ax.set_ylabel("power [MW]")
    ax.legend(loc="best")
    path = f"{out_dir}/bess_power.svg"
    fig.savefig(path)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(9, 4))
    ax.plot(hours, data["soc"], lw=1.2, color="tab:green", label="SOC")
    ax.set_xlabel("hours from start")
    ax.set_ylabel("state of charge [-]")
    ax.set_ylim(0.0, 1.0)
    handles, labels = ax.get_legend_handles_labels()
    if battery is not None and curve is not None:
        ax2 = ax.twinx()
        wear_price = np.array([
            battery.cost_total * loss_coefficient(curve, battery, s)
            for s in data["soc"]
        ])
        ax2.step(hours, wear_price, where="post", color="tab:red", lw=1.0,
                 label="wear price at SOC")
        if c_e_values is not None:
            n = len(hours)
            penalty_price = params.gamma_upper * np.asarray(c_e_values)[:n]
            ax2.step(hours, penalty_price, where="post", color="tab:blue",
                     lw=1.0, label="penalty price")
        ax2.set_ylabel(f"price [{currency}/MWh]")
        more, more_labels = ax2.get_legend_handles_labels()
        handles += more
        labels += more_labels
    ax.legend(handles, labels, loc="best")
    path = f"{out_dir}/soc_prices.svg"
    fig.savefig(path)
    plt.close(fig)
    written.append(path)
    return written
