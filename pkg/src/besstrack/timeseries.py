"""Uniform-step time series: CSV ingestion, smoothing, synthetic data.

Every series lives in its own file with the two-column header
``timestamp,value``.  An optional comment line ``# unit: <text>`` ahead of
the header declares the payload unit; gaps and duplicated timestamps are
hard errors rather than something to interpolate over.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np


class TimeSeriesError(ValueError):
    """Malformed series file or an operation misuse."""


_HEADER = ("timestamp", "value")


@dataclass(frozen=True)
class TimeSeries:
    """A uniformly sampled series of real values.

    Parameters
    ----------
    start : datetime
        Timestamp of the first sample.
    step_minutes : int
        Spacing between consecutive samples.
    values : tuple of float
        The samples themselves; no gaps, no NaNs.
    unit : str or None
        Free-text unit label carried through file round trips.
    """

    start: datetime
    step_minutes: int
    values: tuple
    unit: str | None = None

    def __post_init__(self):
        if self.step_minutes <= 0:
            raise TimeSeriesError("step must be a positive number of minutes")
        if len(self.values) == 0:
            raise TimeSeriesError("series holds no values")
        vals = tuple(float(v) for v in self.values)
        if not all(np.isfinite(vals)):
            raise TimeSeriesError("series contains non-finite values")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    def timestamps(self):
        """Return the timestamp of every sample as a list."""
        step = timedelta(minutes=self.step_minutes)
        return [self.start + k * step for k in range(len(self.values))]

    def as_array(self):
        return np.asarray(self.values, dtype=float)


def load_timeseries(path, expected_step_min=None, expected_unit=None):
    """Read a series file, validating structure as it goes.

    Parameters
    ----------
    path : str
        CSV file with header ``timestamp,value``; ``#``-comment lines may
        precede the header, and ``# unit: X`` declares the unit.
    expected_step_min : int, optional
        Require exactly this spacing.  Without it the spacing is inferred
        from the first two rows (single-row files then fail).
    expected_unit : str, optional
        Require the file to declare exactly this unit.

    Raises
    ------
    TimeSeriesError
        On any structural problem; parse errors carry the line number.
    """
    unit = None
    rows = []
    try:
        handle = open(path, newline="")
    except OSError as exc:
        raise TimeSeriesError(f"cannot open series file {path}: {exc}")
    with handle:
        header_seen = False
        for lineno, line in enumerate(handle, start=1):
            text = line.strip()
            if not header_seen:
                if not text:
                    continue
                if text.startswith("#"):
                    body = text.lstrip("#").strip()
                    if body.lower().startswith("unit:"):
                        unit = body[len("unit:"):].strip()
                    continue
                cols = next(csv.reader([text]))
                if tuple(c.strip() for c in cols) != _HEADER:
                    raise TimeSeriesError(
                        f"{path}:{lineno}: header must be "
                        f"'timestamp,value', got {text!r}")
                header_seen = True
                continue
            if not text:
                raise TimeSeriesError(f"{path}:{lineno}: blank line inside data")
            cols = next(csv.reader([text]))
            if len(cols) != 2:
                raise TimeSeriesError(
                    f"{path}:{lineno}: expected 2 columns, got {len(cols)}")
            try:
                stamp = datetime.fromisoformat(cols[0].strip())
            except ValueError:
                raise TimeSeriesError(
                    f"{path}:{lineno}: bad timestamp {cols[0]!r}")
            try:
                value = float(cols[1])
            except ValueError:
                raise TimeSeriesError(
                    f"{path}:{lineno}: bad value {cols[1]!r}")
            if not np.isfinite(value):
                raise TimeSeriesError(
                    f"{path}:{lineno}: non-finite value {cols[1]!r}")
            rows.append((lineno, stamp, value))
    if not header_seen:
        raise TimeSeriesError(f"{path}: missing 'timestamp,value' header")
    if not rows:
        raise TimeSeriesError(f"{path}: no data rows")

    if expected_unit is not None and unit != expected_unit:
        raise TimeSeriesError(
            f"{path}: unit mismatch: file declares {unit!r}, "
            f"expected {expected_unit!r}")

    if expected_step_min is not None:
        step_min = int(expected_step_min)
    elif len(rows) >= 2:
        step_min = round((rows[1][1] - rows[0][1]).total_seconds() / 60.0)
    else:
        raise TimeSeriesError(
            f"{path}: single row and no expected step; cannot infer spacing")
    if step_min <= 0:
        raise TimeSeriesError(f"{path}: non-increasing timestamps")

    step = timedelta(minutes=step_min)
    for k in range(1, len(rows)):
        lineno, stamp, _ = rows[k]
        gap = stamp - rows[k - 1][1]
        if gap == timedelta(0):
            raise TimeSeriesError(
                f"{path}:{lineno}: duplicated timestamp {stamp.isoformat()}")
        if gap != step:
            raise TimeSeriesError(
                f"{path}:{lineno}: step is {gap} but expected "
                f"{step} (gaps are errors, not interpolated)")

    return TimeSeries(start=rows[0][1], step_minutes=step_min,
                      values=tuple(v for _, _, v in rows), unit=unit)


def save_timeseries(series, path):
    """Write a series so that :func:`load_timeseries` reproduces it bit-exactly.

    Values are written with :func:`repr`, which for Python floats emits the
    shortest string that round-trips.
    """
    with open(path, "w", newline="") as handle:
        if series.unit is not None:
            handle.write(f"# unit: {series.unit}\n")
        handle.write("timestamp,value\n")
        for stamp, value in zip(series.timestamps(), series.values):
            handle.write(f"{stamp.isoformat()},{value!r}\n")


def moving_average_schedule(forecast, window_minutes):
    """Smooth a forecast into a schedule with a centered moving average.

    The window must be a multiple of the series step.  At the edges the
    window shrinks to whatever samples exist rather than padding; for an
    even window the extra sample sits on the early side.

    Parameters
    ----------
    forecast : TimeSeries
    window_minutes : int

    Returns
    -------
    TimeSeries
        Same start, step and unit as the forecast.
    """
    if window_minutes <= 0:
        raise TimeSeriesError("window must be positive")
    if window_minutes % forecast.step_minutes != 0:
        raise TimeSeriesError(
            f"window of {window_minutes} min is not a multiple of the "
            f"{forecast.step_minutes}-min series step")
    w = window_minutes // forecast.step_minutes
    vals = forecast.as_array()
    n = len(vals)
    out = np.empty(n)
    for k in range(n):
        lo = max(0, k - w // 2)
        hi = min(n, k + w - w // 2)
        out[k] = vals[lo:hi].mean()
    return TimeSeries(start=forecast.start,
                      step_minutes=forecast.step_minutes,
                      values=tuple(out), unit=forecast.unit)


def generate_synthetic_day(seed=0, n_steps=104, deviation_mw=6.0,
                           step_minutes=15):
    """Build a deterministic (schedule, wind forecast, price) triple.

    The schedule follows a smooth diurnal curve (in MW, with ``h`` the
    hour of day)::

        P_sch(h) = 55 + 25*sin(2*pi*(h - 6)/24) + 10*sin(4*pi*h/24)

    The wind forecast adds a seeded AR(1) deviation stream,
    ``d_k = 0.7*d_{k-1} + u_k`` with ``u_k ~ U(-deviation_mw, deviation_mw)``
    clipped to ±2.5·deviation_mw, floored so wind stays non-negative.  The
    price is a two-level time-of-use profile: 80 from hour 8 up to hour 20,
    40 otherwise.

    The default 104 steps cover a 96-step day plus a 2-hour look-ahead
    tail at 15-minute resolution.

    Returns
    -------
    (TimeSeries, TimeSeries, TimeSeries)
        Schedule and forecast in MW, price in currency units per MWh.
    """
    if n_steps < 1:
        raise TimeSeriesError("need at least one step")
    rng = np.random.default_rng(seed)
    start = datetime(2023, 6, 1, 0, 0, 0)
    hours = np.arange(n_steps) * (step_minutes / 60.0)

    p_sch = (55.0 + 25.0 * np.sin(2.0 * np.pi * (hours - 6.0) / 24.0)
             + 10.0 * np.sin(4.0 * np.pi * hours / 24.0))

    dev = np.empty(n_steps)
    d = 0.0
    cap = 2.5 * deviation_mw
    for k in range(n_steps):
        d = 0.7 * d + rng.uniform(-deviation_mw, deviation_mw)
        d = min(cap, max(-cap, d))
        dev[k] = d
    p_wind = np.maximum(0.0, p_sch + dev)

    hour_of_day = hours % 24.0
    c_e = np.where((hour_of_day >= 8.0) & (hour_of_day < 20.0), 80.0, 40.0)

    def series(vals, unit):
        return TimeSeries(start=start, step_minutes=step_minutes,
                          values=tuple(vals), unit=unit)

    return (series(p_sch, "MW"), series(p_wind, "MW"),
            series(c_e, "currency/MWh"))
