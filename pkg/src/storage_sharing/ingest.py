"""Meter data to daily peak-period energies and paired-empirical demand models.

Input CSVs are long format, one reading per row::

    timestamp,firm_id,kw
    2024-06-03 00:00:00,house_a,0.41

Column names and the power unit are configurable through :class:`CsvSchema`.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .demand import Empirical, GaussianCopulaModel, PairedEmpiricalModel, TruncatedGaussian

__all__ = [
    "IngestError",
    "UnitMismatchError",
    "CsvSchema",
    "MeterSeries",
    "PeakWindow",
    "DailyEnergy",
    "CohortData",
    "load_csv",
    "daily_peak_energy",
    "build_model",
    "write_matrix_csv",
    "read_matrix_csv",
    "synthetic_meter_frame",
    "synthetic_cohort_model",
]

MIN_COMMON_DAYS = 30


class IngestError(ValueError):
    """Bad input data; `lines` holds the offending 1-based file line numbers."""

    def __init__(self, message: str, lines: Sequence[int] = ()):
        super().__init__(message)
        self.lines = list(lines)


class UnitMismatchError(IngestError):
    pass


@dataclass(frozen=True)
class CsvSchema:
    timestamp: str = "timestamp"
    firm: str = "firm_id"
    power: str = "kw"
    unit: str = "kW"
    #: optional column naming the unit of every row; must agree with `unit`
    unit_column: str | None = None


_UNIT_SCALE = {"kW": 1.0, "W": 1e-3}


@dataclass(frozen=True, eq=False)
class MeterSeries:
    """Regularly sampled power readings (kW) of one firm.

    ``gaps`` lists ``(last reading before, first reading after)`` for every
    hole longer than one interval.
    """

    firm_id: str
    timestamps: pd.DatetimeIndex
    power: np.ndarray
    interval_minutes: int
    gaps: tuple = ()

    def __len__(self):
        return self.power.size

    def regular(self) -> pd.Series:
        """Readings on the full regular grid, NaN where data is missing."""
        grid = pd.date_range(self.timestamps[0], self.timestamps[-1], freq=f"{self.interval_minutes}min")
        return pd.Series(self.power, index=self.timestamps).reindex(grid)

    def total_energy(self) -> float:
        """Trapezoid integral of the whole series in kWh (gaps contribute nothing)."""
        s = self.regular().to_numpy()
        seg = 0.5 * (s[1:] + s[:-1]) * self.interval_minutes / 60.0
        return float(np.nansum(seg))


def _fail_rows(df: pd.DataFrame, mask, what: str, cls=IngestError):
    lines = (np.flatnonzero(np.asarray(mask)) + 2).tolist()  # header is line 1
    shown = ", ".join(map(str, lines[:10])) + (" ..." if len(lines) > 10 else "")
    raise cls(f"{what} on line(s) {shown}", lines)


def load_csv(path, schema: CsvSchema = CsvSchema()) -> list[MeterSeries]:
    """Parse a long-format meter CSV into one :class:`MeterSeries` per firm.

    Raises
    ------
    IngestError
        Missing columns, unparseable timestamps or readings, negative
        power, or timestamps that are not strictly increasing and evenly
        spaced within a firm.
    UnitMismatchError
        When the unit column disagrees with ``schema.unit``.
    """
    if schema.unit not in _UNIT_SCALE:
        raise UnitMismatchError(f"unsupported power unit {schema.unit!r}; use one of {sorted(_UNIT_SCALE)}")
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    needed = [schema.timestamp, schema.firm, schema.power] + ([schema.unit_column] if schema.unit_column else [])
    missing = [c for c in needed if c not in df.columns]
    if missing:
        raise IngestError(f"{path}: missing column(s) {missing}; found {list(df.columns)}")

    ts = pd.to_datetime(df[schema.timestamp], errors="coerce", format="mixed")
    if ts.isna().any():
        _fail_rows(df, ts.isna(), "unparseable timestamp")
    kw = pd.to_numeric(df[schema.power], errors="coerce")
    if kw.isna().any():
        _fail_rows(df, kw.isna(), "unparseable power reading")
    if (df[schema.firm].str.strip() == "").any():
        _fail_rows(df, df[schema.firm].str.strip() == "", "empty firm id")
    if schema.unit_column:
        bad = df[schema.unit_column].str.strip() != schema.unit
        if bad.any():
            _fail_rows(df, bad, f"unit differs from configured {schema.unit!r}", UnitMismatchError)
    if (kw < 0).any():
        _fail_rows(df, kw < 0, "negative power reading")
    kw = kw.to_numpy(dtype=float) * _UNIT_SCALE[schema.unit]

    out = []
    for firm, rows in df.groupby(schema.firm, sort=True).indices.items():
        t = pd.DatetimeIndex(ts.iloc[rows])
        steps = np.diff(t.asi8)
        if np.any(steps <= 0):
            bad = rows[1:][steps <= 0]
            raise IngestError(f"firm {firm}: timestamps not strictly increasing", (bad + 2).tolist())
        if steps.size == 0:
            raise IngestError(f"firm {firm}: only one reading", (rows + 2).tolist())
        step_min = np.round(steps / 60e9).astype(np.int64)
        if np.any(step_min * 60e9 != steps):
            raise IngestError(f"firm {firm}: timestamps are not on whole minutes")
        interval = int(np.bincount(step_min).argmax())
        if np.any(step_min % interval):
            bad = rows[1:][step_min % interval != 0]
            raise IngestError(f"firm {firm}: uneven spacing (interval {interval} min)", (bad + 2).tolist())
        gap_at = np.flatnonzero(step_min > interval)
        gaps = tuple((t[i], t[i + 1]) for i in gap_at)
        out.append(MeterSeries(str(firm), t, kw[rows], interval, gaps))
    return out


@dataclass(frozen=True)
class PeakWindow:
    start: dt.time = dt.time(12, 0)
    end: dt.time = dt.time(18, 0)
    weekdays_only: bool = False

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"peak window must satisfy start < end, got {self.start}-{self.end}")

    @classmethod
    def parse(cls, text: str, weekdays_only: bool = False) -> "PeakWindow":
        """``"12:00-18:00"``."""
        a, b = text.split("-")
        return cls(dt.time.fromisoformat(a.strip()), dt.time.fromisoformat(b.strip()), weekdays_only)

    @property
    def hours(self) -> float:
        return (_minutes(self.end) - _minutes(self.start)) / 60.0


def _minutes(t: dt.time) -> int:
    return t.hour * 60 + t.minute


@dataclass(frozen=True, eq=False)
class DailyEnergy:
    """Peak and off-peak kWh for every usable day of one firm."""

    firm_id: str
    dates: tuple
    peak: np.ndarray
    offpeak: np.ndarray
    dropped: tuple = ()  # (date, reason)

    def as_series(self) -> pd.Series:
        return pd.Series(self.peak, index=pd.Index(self.dates, name="date"), name=self.firm_id)


def _trapz(v: np.ndarray, dt_hours: float) -> float:
    return float(dt_hours * (v.sum() - 0.5 * (v[0] + v[-1])))


def daily_peak_energy(series: MeterSeries, window: PeakWindow = PeakWindow()) -> DailyEnergy:
    """Integrate power over the peak window of each day (trapezoid rule).

    A day is kept only when every grid point from window start to window end
    is present. Off-peak energy is the day's remaining energy: the integral
    from midnight to the next midnight (or to the day's last reading if the
    next midnight is absent) minus the peak part. It is recorded, never
    optimized over.

    Raises
    ------
    IngestError
        If no day has a complete peak window.
    """
    step = series.interval_minutes
    s0 = window.start.hour * 60 + window.start.minute
    s1 = window.end.hour * 60 + window.end.minute
    if s0 % step or s1 % step:
        raise IngestError(f"peak window {window.start}-{window.end} is not on the {step}-min grid")
    reg = series.regular()
    vals = reg.to_numpy()
    first = reg.index[0]
    dt_h = step / 60.0

    dates, peak, offpeak, dropped = [], [], [], []
    day0 = first.normalize()
    n_days = (reg.index[-1].normalize() - day0).days + 1
    for d in range(n_days):
        midnight = day0 + pd.Timedelta(days=d)
        date = midnight.date()
        if window.weekdays_only and midnight.dayofweek >= 5:
            dropped.append((date, "weekend"))
            continue
        i0 = (midnight + pd.Timedelta(minutes=s0) - first) // pd.Timedelta(minutes=step)
        i1 = (midnight + pd.Timedelta(minutes=s1) - first) // pd.Timedelta(minutes=step)
        if i0 < 0 or i1 >= vals.size:
            dropped.append((date, "peak window not covered"))
            continue
        win = vals[i0 : i1 + 1]
        if np.isnan(win).any():
            dropped.append((date, "gap inside peak window"))
            continue
        p = _trapz(win, dt_h)
        j0 = max(0, (midnight - first) // pd.Timedelta(minutes=step))
        j1 = min(vals.size - 1, (midnight + pd.Timedelta(days=1) - first) // pd.Timedelta(minutes=step))
        day = vals[j0 : j1 + 1]
        seg = 0.5 * (day[1:] + day[:-1]) * dt_h
        dates.append(date)
        peak.append(p)
        offpeak.append(float(np.nansum(seg)) - p)
    if not dates:
        raise IngestError(f"firm {series.firm_id}: no day with a complete peak window")
    return DailyEnergy(series.firm_id, tuple(dates), np.array(peak), np.array(offpeak), tuple(dropped))


@dataclass(frozen=True, eq=False)
class CohortData:
    """Aligned daily data of a cohort plus the statistics shown to analysts."""

    model: PairedEmpiricalModel
    correlation: np.ndarray
    cdfs: dict
    offpeak: np.ndarray

    @property
    def firm_ids(self) -> tuple:
        return self.model.firm_ids

    @property
    def dates(self) -> tuple:
        return self.model.dates

    def mean_pairwise_correlation(self) -> float:
        r = self.correlation
        iu = np.triu_indices_from(r, k=1)
        return float(np.nanmean(r[iu])) if iu[0].size else float("nan")

    def write(self, out_dir) -> dict:
        """Write ``demand_matrix.csv``, ``correlation.json`` and ``cdfs.csv``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "matrix": out / "demand_matrix.csv",
            "correlation": out / "correlation.json",
            "cdfs": out / "cdfs.csv",
        }
        write_matrix_csv(self.model, paths["matrix"])
        iu = np.triu_indices_from(self.correlation, k=1)
        pairs = self.correlation[iu]
        with open(paths["correlation"], "w") as fh:
            json.dump(
                {
                    "schema_version": "1",
                    "firm_ids": list(self.firm_ids),
                    "matrix": [[None if np.isnan(v) else float(v) for v in row] for row in self.correlation],
                    "mean_pairwise": None if np.isnan(self.mean_pairwise_correlation()) else self.mean_pairwise_correlation(),
                    "pairwise": [None if np.isnan(v) else float(v) for v in pairs],
                },
                fh,
                indent=2,
            )
        with open(paths["cdfs"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("firm_id", "kwh", "cdf"))
            for fid in self.firm_ids:
                d = self.cdfs[fid]
                for x, p in zip(d.values, np.arange(1, d.size + 1) / d.size):
                    w.writerow((fid, repr(float(x)), repr(float(p))))
        return {k: str(v) for k, v in paths.items()}


def build_model(daily: Mapping[str, DailyEnergy] | Sequence[DailyEnergy], min_days: int = MIN_COMMON_DAYS) -> CohortData:
    """Align firms on their common calendar days and build the joint model.

    Raises
    ------
    IngestError
        If fewer than `min_days` days are complete for every firm.
    """
    items = list(daily.values()) if isinstance(daily, Mapping) else list(daily)
    if not items:
        raise IngestError("no firms given")
    common = set(items[0].dates)
    for d in items[1:]:
        common &= set(d.dates)
    if len(common) < min_days:
        raise IngestError(f"only {len(common)} common complete days, need at least {min_days}")
    dates = sorted(common)
    peak = np.column_stack([d.as_series().loc[dates].to_numpy() for d in items])
    off = np.column_stack(
        [pd.Series(d.offpeak, index=pd.Index(d.dates)).loc[dates].to_numpy() for d in items]
    )
    ids = tuple(d.firm_id for d in items)
    model = PairedEmpiricalModel(peak, ids, tuple(dates))
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.atleast_2d(np.corrcoef(peak, rowvar=False))
    cdfs = {fid: Empirical(peak[:, k]) for k, fid in enumerate(ids)}
    return CohortData(model, corr, cdfs, off)


def write_matrix_csv(model: PairedEmpiricalModel, path) -> None:
    """Days x firms CSV: a ``date`` column then one column per firm id."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("date",) + tuple(model.firm_ids))
        dates = model.dates or tuple(range(model.values.shape[0]))
        for d, row in zip(dates, model.values):
            w.writerow((str(d),) + tuple(repr(float(v)) for v in row))


def read_matrix_csv(path) -> PairedEmpiricalModel:
    """Inverse of :func:`write_matrix_csv`; the ``date`` column is optional."""
    df = pd.read_csv(path, float_precision="round_trip")
    dates = ()
    if "date" in df.columns:
        dates = tuple(df.pop("date").astype(str))
    return PairedEmpiricalModel(df.to_numpy(dtype=float), tuple(str(c) for c in df.columns), dates)


def _one_factor_loadings(n: int, mean_correlation: float, rng: np.random.Generator, spread: float):
    base = np.sqrt(mean_correlation)
    return np.clip(base + spread * rng.standard_normal(n), -0.99, 0.99)


def synthetic_cohort_model(
    n_firms: int, mean_correlation: float = 0.5, seed: int = 0, spread: float = 0.15
) -> GaussianCopulaModel:
    """Heterogeneous cohort with one-factor Gaussian-copula coupling.

    Marginals are truncated Gaussians with means in [4, 12] kWh and standard
    deviations in [1, 3] kWh. Loadings scatter around ``sqrt(mean_correlation)``
    so the average pairwise correlation is close to `mean_correlation`.
    """
    rng = np.random.default_rng(seed)
    mu = rng.uniform(4.0, 12.0, n_firms)
    sd = rng.uniform(1.0, 3.0, n_firms)
    lam = _one_factor_loadings(n_firms, mean_correlation, rng, spread)
    return GaussianCopulaModel.one_factor([TruncatedGaussian(m, s) for m, s in zip(mu, sd)], lam)


def synthetic_meter_frame(
    n_firms: int,
    days: int,
    mean_correlation: float = 0.5,
    interval_minutes: int = 15,
    seed: int = 0,
    start: str = "2024-06-03",
) -> pd.DataFrame:
    """Long-format synthetic meter readings (``timestamp, firm_id, kw``).

    Each firm has a flat base load plus an afternoon bump whose daily height
    follows a one-factor Gaussian model, giving peak-window energies with
    pairwise correlation near `mean_correlation`.
    """
    rng = np.random.default_rng(seed)
    per_day = 24 * 60 // interval_minutes
    t = pd.date_range(start, periods=days * per_day, freq=f"{interval_minutes}min")
    hour = (t.hour + t.minute / 60.0).to_numpy()
    shape = np.exp(-0.5 * ((hour - 15.0) / 2.0) ** 2)
    lam = _one_factor_loadings(n_firms, mean_correlation, rng, 0.1)
    common = rng.standard_normal(days)
    frames = []
    for k in range(n_firms):
        z = lam[k] * common + np.sqrt(1.0 - lam[k] ** 2) * rng.standard_normal(days)
        height = rng.uniform(1.0, 3.0) * np.maximum(1.0 + 0.3 * z, 0.0)
        base = rng.uniform(0.2, 0.6)
        kw = base + np.repeat(height, per_day) * shape
        frames.append(pd.DataFrame({"timestamp": t, "firm_id": f"firm{k:03d}", "kw": kw}))
    return pd.concat(frames, ignore_index=True)
