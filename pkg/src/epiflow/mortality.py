"""Baselines, population, excess death rates and the four mortality outcomes.

Rates are expressed per ``scale`` inhabitants (100,000 by default). Daily
excess rates are kept in weekly-equivalent units: the smoothed daily curve of
weekly counts is divided by population directly, so that its within-week mean
equals the weekly excess rate and a peak read off the daily curve is already
a "weekly EDR".
"""
from __future__ import annotations

import datetime as dt
import enum
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import ValidationError
from .series import (
    CalendarGrid,
    Frequency,
    SmoothingParams,
    TimeSeries,
    aggregate_mean,
    month_start,
    smooth_mortality,
    week_ending,
)

log = logging.getLogger(__name__)

STUDY_START = dt.date(1918, 9, 8)
STUDY_END = dt.date(1919, 2, 22)
STUDY_WEEKS = 24
POP_EXPONENT = 0.85


class Cause(str, enum.Enum):
    INFLUENZA_PNEUMONIA = "influenza_pneumonia"
    ALL_CAUSE = "all_cause"


@dataclass(frozen=True)
class MortalityConfig:
    scale: float = 100_000.0
    weekly: SmoothingParams = field(default_factory=SmoothingParams.weekly)
    monthly: SmoothingParams = field(default_factory=SmoothingParams.monthly)
    window_start: dt.date = STUDY_START
    n_weeks: int = STUDY_WEEKS
    # "weekly": baseline rates are already weekly-equivalent per `scale`;
    # "annual": baseline rates are annualised and get multiplied by 7/365.
    baseline_basis: str = "weekly"
    max_impute_gap: int = 2
    peak_decline_days: int = 7
    second_peak_ratio: float = 0.5

    def __post_init__(self):
        if self.baseline_basis not in ("weekly", "annual"):
            raise ValidationError(f"baseline_basis must be weekly or annual, got {self.baseline_basis!r}")
        if self.scale <= 0:
            raise ValidationError("scale must be positive")

    @property
    def window_weeks(self) -> list[dt.date]:
        first = week_ending(self.window_start)
        return [first + dt.timedelta(weeks=i) for i in range(self.n_weeks)]


def baseline_monthly_median(rates_by_year: Mapping[int, Sequence[float | None]]) -> np.ndarray:
    """Median rate of each calendar month across years.

    ``rates_by_year`` maps a year to its twelve monthly rates (None/NaN when
    missing). Even counts take the mean of the two middle values.
    """
    if not rates_by_year:
        raise ValidationError("no baseline years supplied")
    table = []
    for year, row in sorted(rates_by_year.items()):
        row = [np.nan if v is None else float(v) for v in row]
        if len(row) != 12:
            raise ValidationError(f"year {year}: expected 12 monthly rates, got {len(row)}")
        table.append(row)
    arr = np.asarray(table)
    empty = np.all(np.isnan(arr), axis=0)
    if empty.any():
        months = [int(m) + 1 for m in np.flatnonzero(empty)]
        raise ValidationError(f"no baseline observations for month(s) {months}")
    return np.nanmedian(arr, axis=0)


def estimate_pop_1918(pop_1910: float, pop_1920: float, pandemic_deaths: float = 0.0) -> float:
    """Mid-1918 population by geometric interpolation between censuses.

    The 1920 count is first topped up with pandemic deaths so that cities hit
    hard are not assigned an artificially small 1918 population.
    """
    if pop_1910 <= 0 or pop_1920 <= 0:
        raise ValidationError("census populations must be positive")
    if pandemic_deaths < 0:
        raise ValidationError("pandemic deaths cannot be negative")
    return pop_1910 * ((pop_1920 + pandemic_deaths) / pop_1910) ** POP_EXPONENT


@dataclass(frozen=True, eq=False)
class MortalityCurves:
    city_id: str
    cause: Cause
    pop_1918: float
    wdc: TimeSeries
    ddc: TimeSeries
    mbdr: TimeSeries
    wbdr: TimeSeries
    dbdr: TimeSeries
    ewdr: TimeSeries
    eddr: TimeSeries
    n_negative_smoothed: int = 0

    @property
    def grid(self) -> CalendarGrid:
        return self.eddr.grid


def _seasonal_monthly_series(medians: np.ndarray, grid: CalendarGrid) -> TimeSeries:
    # One padding month each side so edge days see neighbouring months.
    first = month_start(grid.start_date - dt.timedelta(days=1))
    last = month_start(grid.end_date + dt.timedelta(days=32))
    n = (last.year - first.year) * 12 + last.month - first.month + 1
    labels = []
    y, m = first.year, first.month
    for _ in range(n):
        labels.append(dt.date(y, m, 1))
        y, m = (y + 1, 1) if m == 12 else (y, m + 1)
    values = [medians[d.month - 1] for d in labels]
    return TimeSeries.from_periods(labels, values, Frequency.MONTHLY, units="rate")


def _restrict(daily: TimeSeries, grid: CalendarGrid) -> TimeSeries:
    if not (daily.grid.contains(grid.start_date) and daily.grid.contains(grid.end_date)):
        raise ValidationError(
            f"baseline covers {daily.grid.start_date}..{daily.grid.end_date}, "
            f"needs {grid.start_date}..{grid.end_date}"
        )
    a = daily.grid.index_of(grid.start_date)
    return TimeSeries(grid, Frequency.DAILY, daily.values[a : a + grid.length_days], daily.units)


def excess_rates(
    wdc: TimeSeries,
    mbdr,
    pop_1918: float,
    config: MortalityConfig | None = None,
    city_id: str = "",
    cause: Cause = Cause.INFLUENZA_PNEUMONIA,
) -> MortalityCurves:
    """Weekly and daily excess death rates for one city and cause.

    ``mbdr`` is either the twelve seasonal medians (January first) or a
    monthly :class:`TimeSeries` of baseline rates covering the weekly grid.
    """
    config = config or MortalityConfig()
    if wdc.frequency is not Frequency.WEEKLY:
        raise ValidationError("weekly death counts must be a weekly series")
    if wdc.has_missing:
        raise ValidationError(f"{city_id}: weekly death counts have missing values; impute first")
    if pop_1918 is None or not np.isfinite(pop_1918) or pop_1918 <= 0:
        raise ValidationError(f"{city_id}: population missing or nonpositive")
    grid = wdc.grid

    if isinstance(mbdr, TimeSeries):
        monthly = mbdr
    else:
        medians = np.asarray(mbdr, dtype=float)
        if medians.shape != (12,) or np.isnan(medians).any():
            raise ValidationError(f"{city_id}: need 12 complete monthly baseline rates")
        monthly = _seasonal_monthly_series(medians, grid)
    basis = 7.0 / 365.0 if config.baseline_basis == "annual" else 1.0
    dbdr = _restrict(smooth_mortality(monthly, config.monthly), grid)
    dbdr = dbdr.with_values(dbdr.values * basis, units="rate")

    smoothed = smooth_mortality(wdc, config.weekly)
    n_neg = int((smoothed.values < 0).sum())
    if n_neg:
        log.info("%s/%s: %d smoothed daily counts are negative", city_id, cause, n_neg)
    ddc = smoothed.with_values(smoothed.values / 7.0, units="deaths/day")
    per = config.scale / pop_1918
    eddr = smoothed.with_values(smoothed.values * per - dbdr.values, units="rate")
    wbdr = aggregate_mean(dbdr, Frequency.WEEKLY)
    ewdr = wdc.with_values(wdc.values * per - wbdr.values, units="rate")
    return MortalityCurves(
        city_id=city_id,
        cause=Cause(cause),
        pop_1918=float(pop_1918),
        wdc=wdc,
        ddc=ddc,
        mbdr=monthly,
        wbdr=wbdr,
        dbdr=dbdr,
        ewdr=ewdr,
        eddr=eddr,
        n_negative_smoothed=n_neg,
    )


def acceleration_date(curves: MortalityCurves, after: dt.date = STUDY_START) -> dt.date | None:
    """First day strictly after ``after`` where excess reaches twice the baseline."""
    dates = curves.grid.dates
    hit = (curves.eddr.values >= 2.0 * curves.dbdr.values) & np.array([d > after for d in dates])
    if not hit.any():
        return None
    return dates[int(np.argmax(hit))]


@dataclass(frozen=True)
class MortalityOutcomes:
    city_id: str
    cause: Cause
    acceleration_date: dt.date | None
    peak_weekly_edr: float
    peak_date: dt.date
    cumulative_edr: float
    second_peak_flag: bool


def _local_maxima(v: np.ndarray, lo: int, hi: int, decline: int) -> list[int]:
    """Days in [lo, hi) rising strictly from the day before and then falling
    strictly for ``decline`` consecutive days."""
    out = []
    for t in range(lo, hi):
        if t > 0 and not v[t] > v[t - 1]:
            continue
        if t + decline >= v.size:
            continue
        if all(v[t + j] < v[t + j - 1] for j in range(1, decline + 1)):
            out.append(t)
    return out


def peak_and_cumulative(
    curves: MortalityCurves,
    config: MortalityConfig | None = None,
    accel: dt.date | None = None,
) -> MortalityOutcomes:
    """Peak weekly excess rate, cumulative excess and second-peak flag.

    The cumulative excess sums the weekly excess rate over the study window.
    The peak is the first local maximum of the daily excess curve on or after
    the acceleration date (or window start); a local maximum must be followed
    by ``peak_decline_days`` days of strict decline. Without any qualifying
    maximum the global maximum in the window is used.
    """
    config = config or MortalityConfig()
    weeks = config.window_weeks
    labels = curves.ewdr.labels
    present = set(labels)
    missing = [w for w in weeks if w not in present]
    if missing:
        raise ValidationError(
            f"{curves.city_id}: study window incomplete; {len(weeks) - len(missing)}/{len(weeks)} "
            f"weeks covered, first missing {missing[0]}"
        )
    first = labels.index(weeks[0])
    cumulative = float(curves.ewdr.values[first : first + len(weeks)].sum())

    grid = curves.grid
    v = curves.eddr.values
    w_lo = grid.index_of(weeks[0] - dt.timedelta(days=6))
    w_hi = grid.index_of(weeks[-1]) + 1
    start = w_lo
    if accel is not None and grid.contains(accel):
        start = min(max(w_lo, grid.index_of(accel)), w_hi - 1)
    maxima = _local_maxima(v, start, w_hi, config.peak_decline_days)
    if maxima:
        t = maxima[0]
    else:
        t = start + int(np.argmax(v[start:w_hi]))
    peak = float(v[t])
    later = [s for s in maxima if s > t]
    second = peak > 0 and any(v[s] > config.second_peak_ratio * peak for s in later)
    return MortalityOutcomes(
        city_id=curves.city_id,
        cause=curves.cause,
        acceleration_date=accel,
        peak_weekly_edr=peak,
        peak_date=grid.dates[t],
        cumulative_edr=cumulative,
        second_peak_flag=bool(second),
    )


def mortality_outcomes(curves: MortalityCurves, config: MortalityConfig | None = None) -> MortalityOutcomes:
    config = config or MortalityConfig()
    accel = acceleration_date(curves, after=config.window_start)
    return peak_and_cumulative(curves, config, accel)


def align_and_average(
    curves: Mapping[str, MortalityCurves | TimeSeries],
    accel: Mapping[str, dt.date | None],
    high_npi: Mapping[str, bool],
    horizon_weeks: int = 19,
    lead_weeks: int = 0,
) -> tuple[pd.DataFrame, list[str]]:
    """Group-mean daily excess curves indexed by time since acceleration.

    Each city's curve is shifted so day 0 is its acceleration date, then
    averaged without weights within the high- and low-NPI groups. Returns the
    long table (``group, day, weeks_since_acceleration, mean_eddr,
    n_cities``) and the cities excluded for lacking an acceleration date or a
    group assignment. ``curves`` may also map cities to daily excess series.
    """
    offsets = np.arange(-7 * lead_weeks, 7 * horizon_weeks + 1)
    excluded = []
    stacks: dict[str, list[np.ndarray]] = {"high": [], "low": []}
    for city in sorted(curves):
        c = curves[city]
        eddr = c.eddr if isinstance(c, MortalityCurves) else c
        a = accel.get(city)
        if a is None or city not in high_npi or high_npi[city] is None or not eddr.grid.contains(a):
            excluded.append(city)
            continue
        row = np.full(offsets.size, np.nan)
        base = eddr.grid.index_of(a)
        idx = base + offsets
        ok = (idx >= 0) & (idx < eddr.grid.length_days)
        row[ok] = eddr.values[idx[ok]]
        stacks["high" if high_npi[city] else "low"].append(row)
    frames = []
    for group in ("high", "low"):
        rows = stacks[group]
        if rows:
            mat = np.vstack(rows)
            n = (~np.isnan(mat)).sum(axis=0)
            with np.errstate(invalid="ignore"):
                mean = np.where(n > 0, np.nansum(mat, axis=0) / np.maximum(n, 1), np.nan)
        else:
            n = np.zeros(offsets.size, dtype=int)
            mean = np.full(offsets.size, np.nan)
        frames.append(
            pd.DataFrame(
                {
                    "group": group,
                    "day": offsets,
                    "weeks_since_acceleration": offsets / 7.0,
                    "mean_eddr": mean,
                    "n_cities": n,
                }
            )
        )
    if excluded:
        log.warning("align_and_average: excluded %s", ", ".join(excluded))
    return pd.concat(frames, ignore_index=True), excluded


def weekly_series_from_counts(week_ends: Sequence[dt.date], deaths: Sequence[float | None]) -> TimeSeries:
    """Weekly count series over consecutive weeks; absent weeks become missing."""
    if not len(week_ends):
        raise ValidationError("no weekly observations")
    order = sorted(zip(week_ends, deaths))
    for d, _ in order:
        if d.weekday() != 5:
            raise ValidationError(f"{d} is not a week-ending Saturday")
    first, last = order[0][0], order[-1][0]
    n = (last - first).days // 7 + 1
    values = [None] * n
    for d, v in order:
        i = (d - first).days // 7
        if values[i] is not None:
            raise ValidationError(f"duplicate week {d}")
        values[i] = None if v is None or (isinstance(v, float) and np.isnan(v)) else float(v)
    labels = [first + dt.timedelta(weeks=i) for i in range(n)]
    return TimeSeries.from_periods(labels, values, Frequency.WEEKLY, units="deaths")


__all__ = [
    "Cause",
    "MortalityConfig",
    "MortalityCurves",
    "MortalityOutcomes",
    "STUDY_START",
    "STUDY_END",
    "acceleration_date",
    "align_and_average",
    "baseline_monthly_median",
    "estimate_pop_1918",
    "excess_rates",
    "mortality_outcomes",
    "peak_and_cumulative",
    "weekly_series_from_counts",
]
