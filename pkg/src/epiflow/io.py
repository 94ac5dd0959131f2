"""CSV schemas for every input and output table.

Readers are strict: a missing column, an unparseable cell or a value out of
range raises :class:`ValidationError` naming the file and line. Nothing is
coerced silently; the only tolerated blank cells are the ones a schema
declares optional. Every parsed frame carries a ``line`` column (1-based,
header is line 1) so later stages can report row provenance.
"""
from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd
import yaml

from .errors import ValidationError
from .series import Frequency, TimeSeries

log = logging.getLogger(__name__)


def _text(v: str) -> str:
    v = v.strip()
    if not v:
        raise ValueError("empty")
    return v


def _date(v: str) -> dt.date:
    return dt.date.fromisoformat(v.strip())


def _month(v: str) -> dt.date:
    """``YYYY-MM`` or any ISO date within the month; returns the first day."""
    v = v.strip()
    d = dt.date.fromisoformat(v + "-01") if len(v) == 7 else dt.date.fromisoformat(v)
    return d.replace(day=1)


def _float(v: str) -> float:
    x = float(v)
    if not math.isfinite(x):
        raise ValueError("not finite")
    return x


def _nonneg(v: str) -> float:
    x = _float(v)
    if x < 0:
        raise ValueError("negative")
    return x


def _positive(v: str) -> float:
    x = _float(v)
    if x <= 0:
        raise ValueError("must be positive")
    return x


def _int(v: str) -> int:
    return int(v.strip())


def _flag(v: str) -> bool:
    v = v.strip().lower()
    if v in ("1", "true", "yes"):
        return True
    if v in ("0", "false", "no", ""):
        return False
    raise ValueError("expected 0/1 or true/false")


def _latitude(v: str) -> float:
    x = _float(v)
    if abs(x) > 90:
        raise ValueError("latitude outside [-90, 90]")
    return x


def _longitude(v: str) -> float:
    x = _float(v)
    if abs(x) > 180:
        raise ValueError("longitude outside [-180, 180]")
    return x


@dataclass(frozen=True)
class Column:
    name: str
    parse: Callable[[str], object]
    optional: bool = False  # blank cell -> missing


@dataclass(frozen=True)
class Schema:
    name: str
    columns: tuple[Column, ...]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]


WEEKLY_DEATHS = Schema("weekly_deaths", (
    Column("city_id", _text), Column("cause", _text),
    Column("week_end_date", _date), Column("deaths", _nonneg, optional=True),
))
MONTHLY_BASELINE = Schema("monthly_baseline", (
    Column("city_id", _text), Column("cause", _text), Column("month", _int),
    Column("year", _int), Column("rate_per_100k", _nonneg, optional=True),
))
POPULATION = Schema("population", (
    Column("city_id", _text), Column("pop_1910", _positive), Column("pop_1920", _positive),
    Column("pandemic_deaths", _nonneg),
))
NPI_INTERVALS = Schema("npi_intervals", (
    Column("city_id", _text), Column("category", _text),
    Column("start_date", _date), Column("end_date", _date),
))
TRADE_SNIPPETS = Schema("trade_snippets", (
    Column("city_id", _text), Column("sector", _text), Column("week_end_date", _date),
    Column("text", str), Column("strike_flag", _flag),
))
CAMPS = Schema("camps", (
    Column("camp_id", _text), Column("lat", _latitude), Column("lon", _longitude),
    Column("month", _month), Column("strength", _nonneg),
))
LOCATIONS = Schema("locations", (
    Column("location_id", _text), Column("lat", _latitude), Column("lon", _longitude),
))
SERIES = Schema("series", (
    Column("series_id", _text), Column("period_end_date", _date), Column("value", _float, optional=True),
))

INPUT_SCHEMAS = {s.name: s for s in (
    WEEKLY_DEATHS, MONTHLY_BASELINE, POPULATION, NPI_INTERVALS, TRADE_SNIPPETS, CAMPS, LOCATIONS,
)}


def read_table(path: str | Path, schema: Schema) -> pd.DataFrame:
    """Parse ``path`` against ``schema``; extra columns are kept as strings."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"{path}: file not found")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file (no header)") from None
        missing = [c for c in schema.names if c not in header]
        if missing:
            raise ValidationError(f"{path}:1: missing column(s) {missing}")
        if len(set(header)) != len(header):
            raise ValidationError(f"{path}:1: duplicate column names")
        pos = {h: i for i, h in enumerate(header)}
        rows = []
        for raw in reader:
            line = reader.line_num
            if not raw or all(not c.strip() for c in raw):
                continue
            if len(raw) != len(header):
                raise ValidationError(f"{path}:{line}: expected {len(header)} fields, got {len(raw)}")
            rec = {"line": line}
            for col in schema.columns:
                cell = raw[pos[col.name]]
                if col.optional and not cell.strip():
                    rec[col.name] = np.nan
                    continue
                try:
                    rec[col.name] = col.parse(cell)
                except (ValueError, TypeError) as exc:
                    raise ValidationError(f"{path}:{line}: column {col.name}: bad value {cell!r} ({exc})") from None
            for h in header:
                if h not in rec:
                    rec[h] = raw[pos[h]]
            rows.append(rec)
    return pd.DataFrame(rows, columns=["line", *schema.names, *(h for h in header if h not in schema.names)])


def _check_unique(df: pd.DataFrame, keys: list[str], path) -> None:
    dup = df.duplicated(subset=keys, keep="first")
    if dup.any():
        row = df[dup].iloc[0]
        raise ValidationError(f"{path}:{row['line']}: duplicate key {tuple(row[k] for k in keys)}")


def load_weekly_deaths(path) -> pd.DataFrame:
    df = read_table(path, WEEKLY_DEATHS)
    for _, r in df[[d.weekday() != 5 for d in df["week_end_date"]]].head(1).iterrows():
        raise ValidationError(f"{path}:{r['line']}: {r['week_end_date']} is not a week-ending Saturday")
    _check_unique(df, ["city_id", "cause", "week_end_date"], path)
    return df


def load_monthly_baseline(path) -> pd.DataFrame:
    df = read_table(path, MONTHLY_BASELINE)
    bad = df[(df["month"] < 1) | (df["month"] > 12)]
    if len(bad):
        raise ValidationError(f"{path}:{bad['line'].iloc[0]}: month must be 1..12")
    _check_unique(df, ["city_id", "cause", "year", "month"], path)
    return df


def load_population(path) -> pd.DataFrame:
    df = read_table(path, POPULATION)
    _check_unique(df, ["city_id"], path)
    return df


def load_npi_intervals(path) -> pd.DataFrame:
    df = read_table(path, NPI_INTERVALS)
    bad = df[df["end_date"] < df["start_date"]]
    if len(bad):
        raise ValidationError(f"{path}:{bad['line'].iloc[0]}: end_date before start_date")
    return df


def load_trade_snippets(path) -> pd.DataFrame:
    return read_table(path, TRADE_SNIPPETS)


def load_camps(path) -> pd.DataFrame:
    df = read_table(path, CAMPS)
    _check_unique(df, ["camp_id", "month"], path)
    coords = df.groupby("camp_id")[["lat", "lon"]].nunique()
    moved = coords[(coords > 1).any(axis=1)]
    if len(moved):
        raise ValidationError(f"{path}: camp {moved.index[0]} has inconsistent coordinates")
    return df


def load_locations(path) -> pd.DataFrame:
    df = read_table(path, LOCATIONS)
    _check_unique(df, ["location_id"], path)
    return df


def load_table(path) -> pd.DataFrame:
    """Free-form CSV (covariates, regression panels) with a ``line`` column."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"{path}: file not found")
    df = pd.read_csv(path, dtype={"city_id": str})
    df.insert(0, "line", np.arange(2, len(df) + 2))
    return df


def sidecar_path(path: str | Path, suffix: str = ".meta.yaml") -> Path:
    path = Path(path)
    return path.with_name(path.stem + suffix)


def load_series(path: str | Path) -> dict[str, TimeSeries]:
    """Read a long series CSV; frequencies come from ``<stem>.meta.yaml``.

    The sidecar holds either ``frequency: weekly`` for every series or a
    ``frequencies`` mapping from series id to frequency. Periods are labelled
    by their end date (Saturday for weeks, last day for months).
    """
    meta_path = sidecar_path(path)
    if not meta_path.is_file():
        raise ValidationError(f"{path}: frequency sidecar {meta_path.name} not found")
    meta = yaml.safe_load(meta_path.read_text()) or {}
    unknown = set(meta) - {"frequency", "frequencies", "units"}
    if unknown:
        raise ValidationError(f"{meta_path}: unknown key(s) {sorted(unknown)}")
    df = read_table(path, SERIES)
    out = {}
    for sid, g in df.groupby("series_id", sort=True):
        freq_name = (meta.get("frequencies") or {}).get(sid, meta.get("frequency"))
        if freq_name is None:
            raise ValidationError(f"{meta_path}: no frequency for series {sid}")
        try:
            freq = Frequency(freq_name)
        except ValueError:
            raise ValidationError(f"{meta_path}: unknown frequency {freq_name!r}") from None
        ends = list(g["period_end_date"])
        if freq is Frequency.MONTHLY:
            for e, line in zip(ends, g["line"]):
                if (e + dt.timedelta(days=1)).day != 1:
                    raise ValidationError(f"{path}:{line}: {e} is not a month end")
            labels = [e.replace(day=1) for e in ends]
        elif freq is Frequency.WEEKLY:
            for e, line in zip(ends, g["line"]):
                if e.weekday() != 5:
                    raise ValidationError(f"{path}:{line}: {e} is not a week-ending Saturday")
            labels = ends
        else:
            labels = ends
        order = np.argsort(labels, kind="mergesort")
        labels = [labels[i] for i in order]
        values = g["value"].to_numpy(float)[order]
        out[sid] = TimeSeries.from_periods(labels, values, freq, units=meta.get("units", ""))
    return out


def write_series(path: str | Path, series: dict[str, TimeSeries]) -> None:
    """Inverse of :func:`load_series`, including the sidecar."""
    rows = []
    freqs = {}
    for sid in sorted(series):
        s = series[sid]
        freqs[sid] = s.frequency.value
        for label, v in zip(s.labels, s.values):
            if s.frequency is Frequency.MONTHLY:
                nxt = (label.replace(day=28) + dt.timedelta(days=4)).replace(day=1)
                end = nxt - dt.timedelta(days=1)
            else:
                end = label
            rows.append({"series_id": sid, "period_end_date": end.isoformat(), "value": v})
    write_csv(pd.DataFrame(rows, columns=SERIES.names), path)
    sidecar_path(path).write_text(yaml.safe_dump({"frequencies": freqs}, sort_keys=True))


def write_csv(df: pd.DataFrame, path: str | Path) -> None:
    """Deterministic CSV: fixed line ending, shortest round-trip floats."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(path, index=False, lineterminator="\n", float_format=None)
    except OSError as exc:
        raise ValidationError(f"cannot write {path}: {exc}") from exc


def write_json(obj, path: str | Path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n")
    except OSError as exc:
        raise ValidationError(f"cannot write {path}: {exc}") from exc


def file_hash(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
