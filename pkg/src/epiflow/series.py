"""Calendar-grid time series and mean-preserving temporal disaggregation.

Every low-frequency series (weekly death counts, monthly baseline rates) lives
on a contiguous daily :class:`CalendarGrid`. Weeks end on Saturday, months
are true calendar months. Period series are broadcast onto the daily grid by
repeating the period value (not dividing it), so a broadcast weekly count
keeps its weekly scale on every day of the week.
"""
from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import ValidationError

_SATURDAY = 5


class Frequency(str, enum.Enum):
    DAILY = "daily"
    WEEKLY = "weekly"
    MONTHLY = "monthly"


def week_ending(day: dt.date) -> dt.date:
    """Saturday closing the week that contains ``day``."""
    return day + dt.timedelta(days=(_SATURDAY - day.weekday()) % 7)


def month_start(day: dt.date) -> dt.date:
    return day.replace(day=1)


def _add_months(day: dt.date, n: int) -> dt.date:
    m = day.month - 1 + n
    return dt.date(day.year + m // 12, m % 12 + 1, 1)


@dataclass(frozen=True)
class CalendarGrid:
    """A contiguous run of ``length_days`` days starting at ``start_date``."""

    start_date: dt.date
    length_days: int

    def __post_init__(self):
        if int(self.length_days) < 1:
            raise ValidationError("grid length must be a positive number of days")

    @classmethod
    def spanning(cls, first: dt.date, last: dt.date) -> "CalendarGrid":
        if last < first:
            raise ValidationError(f"grid end {last} precedes start {first}")
        return cls(first, (last - first).days + 1)

    @classmethod
    def weeks(cls, first_week_end: dt.date, n_weeks: int) -> "CalendarGrid":
        """Grid covering ``n_weeks`` whole weeks, the first ending on ``first_week_end``."""
        if first_week_end.weekday() != _SATURDAY:
            raise ValidationError(f"{first_week_end} is not a Saturday week-ending date")
        return cls(first_week_end - dt.timedelta(days=6), 7 * n_weeks)

    @classmethod
    def months(cls, first_month: dt.date, n_months: int) -> "CalendarGrid":
        start = month_start(first_month)
        end = _add_months(start, n_months) - dt.timedelta(days=1)
        return cls.spanning(start, end)

    @property
    def end_date(self) -> dt.date:
        return self.start_date + dt.timedelta(days=self.length_days - 1)

    @cached_property
    def dates(self) -> list[dt.date]:
        return [self.start_date + dt.timedelta(days=i) for i in range(self.length_days)]

    def index_of(self, day: dt.date) -> int:
        i = (day - self.start_date).days
        if not 0 <= i < self.length_days:
            raise ValidationError(f"{day} is outside grid {self.start_date}..{self.end_date}")
        return i

    def contains(self, day: dt.date) -> bool:
        return 0 <= (day - self.start_date).days < self.length_days

    def _keys(self, freq: Frequency) -> list:
        freq = Frequency(freq)
        if freq is Frequency.DAILY:
            return self.dates
        if freq is Frequency.WEEKLY:
            return [week_ending(d) for d in self.dates]
        return [month_start(d) for d in self.dates]

    def period_index(self, freq: Frequency) -> np.ndarray:
        """Map each day of the grid to the 0-based index of its enclosing period."""
        return self._period_structure(Frequency(freq))[0]

    def period_labels(self, freq: Frequency) -> list[dt.date]:
        """Period labels: the day itself, the week-ending Saturday, or the 1st of the month."""
        return self._period_structure(Frequency(freq))[1]

    def n_periods(self, freq: Frequency) -> int:
        return len(self.period_labels(freq))

    def _period_structure(self, freq: Frequency):
        cache = self.__dict__.setdefault("_period_cache", {})
        if freq not in cache:
            keys = self._keys(freq)
            labels: list = []
            idx = np.empty(self.length_days, dtype=np.intp)
            for i, k in enumerate(keys):
                if not labels or labels[-1] != k:
                    labels.append(k)
                idx[i] = len(labels) - 1
            idx.setflags(write=False)
            cache[freq] = (idx, labels)
        return cache[freq]


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Values at the native frequency of a series laid on a calendar grid.

    Missing values are NaN; they are never replaced silently.
    """

    grid: CalendarGrid
    frequency: Frequency
    values: np.ndarray
    units: str = ""

    def __post_init__(self):
        object.__setattr__(self, "frequency", Frequency(self.frequency))
        vals = np.array(self.values, dtype=float, copy=True).reshape(-1)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        expected = self.grid.n_periods(self.frequency)
        if vals.size != expected:
            raise ValidationError(
                f"{self.frequency.value} series on {self.grid.length_days}-day grid "
                f"needs {expected} values, got {vals.size}"
            )

    @classmethod
    def from_periods(
        cls,
        labels: Sequence[dt.date],
        values: Sequence[float | None],
        frequency: Frequency,
        units: str = "",
    ) -> "TimeSeries":
        """Build a series from consecutive period labels (week-end Saturdays or months)."""
        frequency = Frequency(frequency)
        if len(labels) != len(values) or not labels:
            raise ValidationError("labels and values must be non-empty and equal length")
        labels = list(labels)
        if frequency is Frequency.WEEKLY:
            grid = CalendarGrid.weeks(labels[0], len(labels))
        elif frequency is Frequency.MONTHLY:
            grid = CalendarGrid.months(labels[0], len(labels))
        else:
            grid = CalendarGrid(labels[0], len(labels))
        if grid.period_labels(frequency) != [
            (month_start(d) if frequency is Frequency.MONTHLY else d) for d in labels
        ]:
            raise ValidationError(f"{frequency.value} labels are not consecutive periods")
        vals = [np.nan if v is None else v for v in values]
        return cls(grid, frequency, np.asarray(vals, dtype=float), units)

    @property
    def labels(self) -> list[dt.date]:
        return self.grid.period_labels(self.frequency)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    @property
    def has_missing(self) -> bool:
        return bool(self.missing.any())

    def with_values(self, values, units: str | None = None) -> "TimeSeries":
        return TimeSeries(self.grid, self.frequency, values, self.units if units is None else units)

    def value_at(self, day: dt.date) -> float:
        """Value of the period containing ``day``."""
        return float(self.values[self.grid.period_index(self.frequency)[self.grid.index_of(day)]])

    def to_pandas(self):
        import pandas as pd

        return pd.Series(self.values, index=pd.DatetimeIndex(self.labels), name=self.units or None)

    def __len__(self):
        return self.values.size

    def __repr__(self):
        return (
            f"TimeSeries({self.frequency.value}, {self.grid.start_date}..{self.grid.end_date}, "
            f"n={self.values.size})"
        )


@dataclass(frozen=True)
class SmoothingParams:
    frequency: Frequency
    bandwidth: int = field(default=0)

    def __post_init__(self):
        freq = Frequency(self.frequency)
        if freq is Frequency.DAILY:
            raise ValidationError("smoothing applies to weekly or monthly series")
        object.__setattr__(self, "frequency", freq)
        if self.bandwidth == 0:
            object.__setattr__(self, "bandwidth", 3 if freq is Frequency.WEEKLY else 15)
        if int(self.bandwidth) < 1:
            raise ValidationError(f"bandwidth must be >= 1, got {self.bandwidth}")

    @classmethod
    def weekly(cls, k: int = 3) -> "SmoothingParams":
        return cls(Frequency.WEEKLY, k)

    @classmethod
    def monthly(cls, k: int = 15) -> "SmoothingParams":
        return cls(Frequency.MONTHLY, k)


def _require_complete(s: TimeSeries, what: str):
    if s.has_missing:
        raise ValidationError(f"{what}: series has missing values; impute first")


def _require_daily(s: TimeSeries, what: str):
    if s.frequency is not Frequency.DAILY:
        raise ValidationError(f"{what} expects a daily series, got {s.frequency.value}")


def broadcast_to_daily(s: TimeSeries) -> TimeSeries:
    """Repeat each period value on every day of that period."""
    _require_complete(s, "broadcast_to_daily")
    idx = s.grid.period_index(s.frequency)
    return TimeSeries(s.grid, Frequency.DAILY, s.values[idx], s.units)


def rolling_mean(s: TimeSeries, i: int) -> TimeSeries:
    """Centered mean over days ``t-i .. t+i``; the window is truncated at the ends."""
    if int(i) < 1:
        raise ValidationError(f"invalid bandwidth {i}; must be >= 1")
    _require_daily(s, "rolling_mean")
    _require_complete(s, "rolling_mean")
    # Windows are summed directly (cumsum differencing accumulates error), and
    # around a reference value so that a constant series comes back exactly.
    n = s.values.size
    ref = s.values[0] if n else 0.0
    padded = np.concatenate((np.zeros(i), s.values - ref, np.zeros(i)))
    sums = np.lib.stride_tricks.sliding_window_view(padded, 2 * i + 1).sum(axis=1)
    t = np.arange(n)
    counts = np.minimum(t + i, n - 1) - np.maximum(t - i, 0) + 1
    return s.with_values(ref + sums / counts)


def _period_means(values: np.ndarray, idx: np.ndarray) -> np.ndarray:
    ref = values[0] if values.size else 0.0
    sums = np.bincount(idx, weights=values - ref)
    counts = np.bincount(idx)
    return ref + sums / counts


def mean_by(s: TimeSeries, frequency: Frequency) -> TimeSeries:
    """Replace each day by the mean of its enclosing week or month."""
    _require_daily(s, "mean_by")
    _require_complete(s, "mean_by")
    idx = s.grid.period_index(frequency)
    return s.with_values(_period_means(s.values, idx)[idx])


def aggregate_mean(s: TimeSeries, frequency: Frequency) -> TimeSeries:
    """Collapse a daily series to its per-period means at ``frequency``."""
    _require_daily(s, "aggregate_mean")
    idx = s.grid.period_index(frequency)
    return TimeSeries(s.grid, frequency, _period_means(s.values, idx), s.units)


def smooth_mortality(x: TimeSeries, params: SmoothingParams, return_last_z: bool = False):
    """Disaggregate a weekly or monthly series into a smooth daily series.

    Iterated centered rolling means with shrinking bandwidth ``k, k-1, ..., 1``.
    After each pass the within-period mean of the broadcast input is restored,
    so the output's weekly (or monthly) means equal ``x``. The last pass
    (bandwidth 1) computes a rolling mean that is not folded back into the
    output; pass ``return_last_z=True`` to get it as a second return value.
    """
    _require_complete(x, "smooth_mortality")
    if x.frequency is not params.frequency:
        raise ValidationError(
            f"frequency mismatch: series is {x.frequency.value}, params are {params.frequency.value}"
        )
    base = broadcast_to_daily(x)
    idx = x.grid.period_index(params.frequency)
    y = base.values
    z = y
    for i in range(params.bandwidth, 0, -1):
        z = rolling_mean(base.with_values(y), i).values
        w = _period_means(z, idx)[idx]
        if i > 1:
            y = base.values + z - w
    out = base.with_values(y)
    if return_last_z:
        return out, base.with_values(z)
    return out


def impute_linear(s: TimeSeries, max_gap: int = 2) -> tuple[TimeSeries, int]:
    """Fill interior gaps of at most ``max_gap`` periods by linear interpolation.

    Returns the filled series and the number of imputed periods. Leading or
    trailing gaps are rejected, as is any interior gap longer than ``max_gap``.
    """
    miss = s.missing
    if not miss.any():
        return s, 0
    if miss[0]:
        raise ValidationError(f"leading missing value at {s.labels[0]}; cannot extrapolate")
    if miss[-1]:
        raise ValidationError(f"trailing missing value at {s.labels[-1]}; cannot extrapolate")
    pos = np.arange(miss.size)
    # Locate runs of missing values.
    edges = np.diff(np.concatenate(([0], miss.astype(int), [0])))
    starts, stops = np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)
    for a, b in zip(starts, stops):
        if b - a > max_gap:
            raise ValidationError(
                f"gap of {b - a} periods starting {s.labels[a]} exceeds max_gap={max_gap}"
            )
    vals = s.values.copy()
    vals[miss] = np.interp(pos[miss], pos[~miss], vals[~miss])
    return s.with_values(vals), int(miss.sum())
