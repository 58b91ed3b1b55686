"""Run configuration: one JSON file holding plant, model and run settings.

The file mirrors the plant and optimizer parameter tables key for key so a
default dump is also documentation.  Everything money-valued is in abstract
currency units; the ``currency`` label only decorates reports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .degradation import BatteryParams, CurveError, CycleLifeCurve
from .horizon import SimulationConfig
from .milp import SolveOptions
from .tracking import TrackingError, TrackingParams


class ConfigError(ValueError):
    """A configuration file that cannot drive a run."""


@dataclass(frozen=True)
class RunConfig:
    """Everything a simulation run needs besides the series data."""

    battery: BatteryParams
    curve: CycleLifeCurve
    tracking: TrackingParams
    solver: SolveOptions
    simulation: SimulationConfig
    schedule_path: str | None = None
    wind_forecast_path: str | None = None
    price_path: str | None = None
    currency: str = "currency units"


def default_config_dict():
    """Default parameter set: 25 MWh / 10 MW LFP plant, 5% band, 10 segments."""
    return {
        "currency": "currency units",
        "battery": {
            "capacity_mwh": 25.0,
            "cost_total": 1.285e7,
            "p_discharge_max_mw": 10.0,
            "p_charge_max_mw": 10.0,
            "eta_discharge": 1.05,
            "eta_charge": 0.95,
            "soc_min": 0.15,
            "soc_max": 0.85,
        },
        "curve": {
            "family": "biexp",
            "b1": 49660.0,
            "c1": -14.32,
            "b2": 34280.0,
            "c2": -2.181,
        },
        "tracking": {
            "lambda_lower": 0.05,
            "lambda_upper": 0.05,
            "gamma_lower": 1.0,
            "gamma_upper": 1.0,
            "n_seg": 10,
            "horizon_h": 2.0,
            "dt_min": 15,
        },
        "solver": {
            "abs_gap": 1e-7,
            "rel_gap": 1e-9,
            "node_limit": 200000,
        },
        "simulation": {
            "start_index": 0,
            "n_steps": 96,
            "soc_initial": 0.5,
            "mode": "case1",
        },
        "data": {
            "schedule": None,
            "wind_forecast": None,
            "price": None,
        },
    }


def write_default_config(path):
    with open(path, "w") as handle:
        json.dump(default_config_dict(), handle, indent=2)
        handle.write("\n")


def _section(raw, name, allowed):
    block = raw.get(name)
    if block is None:
        raise ConfigError(f"config is missing the '{name}' section")
    if not isinstance(block, dict):
        raise ConfigError(f"config section '{name}' must be an object")
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigError(
            f"config section '{name}' has unknown keys: {', '.join(unknown)}")
    return block


def _build_curve(block):
    family = block.get("family")
    if family == "biexp":
        want = ("family", "b1", "c1", "b2", "c2")
        missing = [k for k in want[1:] if k not in block]
        if missing:
            raise ConfigError(
                f"biexp curve is missing keys: {', '.join(missing)}")
        return CycleLifeCurve.biexponential(
            block["b1"], block["c1"], block["b2"], block["c2"])
    if family == "poly":
        coeffs = block.get("a")
        if not isinstance(coeffs, list) or len(coeffs) != 5:
            raise ConfigError(
                "poly curve needs 'a': a list of 5 coefficients (constant "
                "term first)")
        return CycleLifeCurve.polynomial(*coeffs)
    raise ConfigError(
        f"unknown curve family {family!r}; use 'biexp' or 'poly'")


def load_config(path):
    """Parse and cross-validate a config file into a :class:`RunConfig`.

    Raises
    ------
    ConfigError
        With a message naming the offending section or check.
    """
    try:
        with open(path) as handle:
            raw = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")

    top_allowed = ("currency", "battery", "curve", "tracking", "solver",
                   "simulation", "data")
    unknown = sorted(set(raw) - set(top_allowed))
    if unknown:
        raise ConfigError(f"config has unknown sections: {', '.join(unknown)}")

    bat_block = _section(raw, "battery", (
        "capacity_mwh", "cost_total", "p_discharge_max_mw", "p_charge_max_mw",
        "eta_discharge", "eta_charge", "soc_min", "soc_max"))
    try:
        battery = BatteryParams(**bat_block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"battery settings rejected: {exc}")

    curve_block = _section(raw, "curve", ("family", "b1", "c1", "b2", "c2", "a"))
    try:
        curve = _build_curve(curve_block)
    except CurveError as exc:
        raise ConfigError(f"curve settings rejected: {exc}")

    trk_block = dict(_section(raw, "tracking", (
        "lambda_lower", "lambda_upper", "gamma_lower", "gamma_upper",
        "n_seg", "horizon_h", "dt_min")))
    dt_min = trk_block.pop("dt_min", 15)
    if not isinstance(dt_min, (int, float)) or dt_min <= 0:
        raise ConfigError("tracking.dt_min must be a positive number of minutes")
    sim_block = _section(raw, "simulation", (
        "start_index", "n_steps", "soc_initial", "mode"))
    try:
        tracking = TrackingParams(dt=dt_min / 60.0,
                                  mode=sim_block.get("mode", "case1"),
                                  **trk_block)
    except (TypeError, TrackingError) as exc:
        raise ConfigError(f"tracking settings rejected: {exc}")

    solver_block = _section(raw, "solver", (
        "integrality_tol", "feasibility_tol", "abs_gap", "rel_gap",
        "node_limit", "use_priorities"))
    try:
        solver = SolveOptions(**solver_block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver settings rejected: {exc}")

    try:
        simulation = SimulationConfig(**sim_block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"simulation settings rejected: {exc}")

    if not battery.soc_min <= simulation.soc_initial <= battery.soc_max:
        raise ConfigError(
            f"soc_initial {simulation.soc_initial} lies outside the SOC "
            f"window [{battery.soc_min}, {battery.soc_max}]")

    data_block = _section(raw, "data", ("schedule", "wind_forecast", "price"))
    currency = raw.get("currency", "currency units")
    if not isinstance(currency, str):
        raise ConfigError("currency label must be a string")

    return RunConfig(
        battery=battery,
        curve=curve,
        tracking=tracking,
        solver=solver,
        simulation=simulation,
        schedule_path=data_block.get("schedule"),
        wind_forecast_path=data_block.get("wind_forecast"),
        price_path=data_block.get("price"),
        currency=currency,
    )


def check_series_against_config(cfg, p_sch, p_wind_f, c_e):
    """Cross-checks between the config and the three loaded series.

    Verifies matching steps and start stamps, that the step equals the
    optimizer discretization, and that each series is long enough for the
    applied steps plus the look-ahead tail.
    """
    dt_min = round(cfg.tracking.dt * 60.0)
    trio = (("schedule", p_sch), ("wind_forecast", p_wind_f), ("price", c_e))
    for name, series in trio:
        if series.step_minutes != dt_min:
            raise ConfigError(
                f"{name} series step is {series.step_minutes} min but the "
                f"optimizer step is {dt_min} min")
        if series.start != p_sch.start:
            raise ConfigError(
                f"{name} series starts at {series.start.isoformat()} but the "
                f"schedule starts at {p_sch.start.isoformat()}")
    needed = (cfg.simulation.start_index + cfg.simulation.n_steps
              + cfg.tracking.n_steps)
    for name, series in trio:
        if len(series) < needed:
            raise ConfigError(
                f"{name} series has {len(series)} rows but the run needs "
                f"{needed} (applied steps plus look-ahead)")
