"""NPI Intensity, NPI Speed and the High-NPI indicator."""
from __future__ import annotations

import datetime as dt
import enum
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import ValidationError
from .mortality import STUDY_END, STUDY_START


class NpiCategory(str, enum.Enum):
    SCHOOL_CLOSURE = "school_closure"
    PUBLIC_GATHERING_BAN = "public_gathering_ban"
    OTHER_QUARANTINE_ISOLATION = "other_quarantine_isolation"


def parse_category(label: str) -> NpiCategory:
    try:
        return NpiCategory(label.strip().lower())
    except ValueError:
        raise ValidationError(f"unknown NPI category {label!r}") from None


Interval = tuple[dt.date, dt.date]


def _union(intervals: Iterable[Interval]) -> list[Interval]:
    merged: list[list[dt.date]] = []
    for s, e in sorted(intervals):
        if e < s:
            raise ValidationError(f"interval end {e} precedes start {s}")
        if merged and s <= merged[-1][1] + dt.timedelta(days=1):
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    return [(s, e) for s, e in merged]


@dataclass(frozen=True)
class NpiRecord:
    """Activation intervals per NPI category for one city.

    Intervals are inclusive at both ends. Construction merges overlapping or
    adjacent intervals within a category.
    """

    city_id: str
    intervals: Mapping[NpiCategory, tuple[Interval, ...]]
    window: Interval = (STUDY_START, STUDY_END)

    def __post_init__(self):
        norm = {}
        for cat, ivs in self.intervals.items():
            cat = parse_category(cat) if isinstance(cat, str) else NpiCategory(cat)
            norm[cat] = tuple(_union(list(norm.get(cat, ())) + list(ivs)))
        object.__setattr__(self, "intervals", norm)

    @property
    def first_response_date(self) -> dt.date | None:
        starts = [s for ivs in self.intervals.values() for s, _ in ivs]
        return min(starts) if starts else None

    def clipped(self, category: NpiCategory) -> list[Interval]:
        lo, hi = self.window
        out = []
        for s, e in self.intervals.get(category, ()):
            s, e = max(s, lo), min(e, hi)
            if s <= e:
                out.append((s, e))
        return out


def npi_intensity(record: NpiRecord, inclusive: bool = True) -> int:
    """Active NPI-days summed over the three categories within the window.

    ``inclusive=False`` counts ``end - start`` days per interval, which is
    reported alongside as a diagnostic.
    """
    extra = 1 if inclusive else 0
    return sum(
        (e - s).days + extra for cat in NpiCategory for s, e in record.clipped(cat)
    )


def npi_speed(record: NpiRecord, accel: dt.date | None) -> int | None:
    """Days by which the first NPI preceded mortality acceleration (negative if it lagged)."""
    first = record.first_response_date
    if accel is None or first is None:
        return None
    return -(first - accel).days


@dataclass(frozen=True)
class NpiMeasures:
    city_id: str
    intensity: int
    speed: int | None
    high_npi: bool | None = None


def classify_high_npi(
    intensity: Mapping[str, float], speed: Mapping[str, float]
) -> tuple[dict[str, bool], dict[str, float]]:
    """Flag cities strictly above the sample median in both intensity and speed.

    The sample is the set of cities present in both mappings with a defined
    speed. Returns the flags and the medians used.
    """
    sample = sorted(c for c in intensity if c in speed and speed[c] is not None)
    if len(sample) < 2:
        raise ValidationError(f"need at least 2 cities to classify, got {len(sample)}")
    ints = np.array([intensity[c] for c in sample], dtype=float)
    spds = np.array([speed[c] for c in sample], dtype=float)
    med_i, med_s = float(np.median(ints)), float(np.median(spds))
    flags = {c: bool(i > med_i and s > med_s) for c, i, s in zip(sample, ints, spds)}
    if np.all(ints == ints[0]) or np.all(spds == spds[0]):
        warnings.warn("a NPI measure is identical across cities; no city can be above its median")
    return flags, {"intensity": med_i, "speed": med_s, "n": len(sample)}


def compute_measures(
    records: Mapping[str, NpiRecord], accel: Mapping[str, dt.date | None]
) -> tuple[list[NpiMeasures], dict]:
    """Measures for every city with NPI records; High NPI over cities with a speed."""
    intensity = {c: npi_intensity(r) for c, r in records.items()}
    speed = {c: npi_speed(r, accel.get(c)) for c, r in records.items()}
    with_speed = {c: s for c, s in speed.items() if s is not None}
    flags: dict[str, bool] = {}
    medians: dict = {"intensity": None, "speed": None, "n": 0}
    if len(with_speed) >= 2:
        flags, medians = classify_high_npi(intensity, with_speed)
    out = [
        NpiMeasures(c, intensity[c], speed[c], flags.get(c)) for c in sorted(records)
    ]
    info = {
        "medians": medians,
        "sample": sorted(flags),
        "excluded_no_speed": sorted(c for c in records if speed[c] is None),
        "intensity_exclusive": {c: npi_intensity(records[c], inclusive=False) for c in sorted(records)},
    }
    return out, info
