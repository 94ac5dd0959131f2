"""Classification of one-word trade-condition reports into a disruption index.

Each weekly report (wholesale, retail or manufacturing) is mapped to a
three-level rating (Bad/Fair/Good) and a binary index: 100 when trade was not
disrupted (Good), 0 otherwise. Ratings are averaged to city-month and across
sectors.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import pandas as pd

from .errors import ValidationError


class Level(enum.IntEnum):
    BAD = 1
    FAIR = 2
    GOOD = 3


SECTORS = ("wholesale", "retail", "manufacturing")

GOOD_WORDS = (
    "good", "brisk", "excellent", "active", "liberal", "very active", "better",
    "record", "very good", "steady", "more active", "prompt",
)
FAIR_WORDS = (
    "fair", "moderate", "fair to good", "satisfactory", "close", "3/4 capacity",
    "60 percent", "75 percent", "75% basis", "normal", "fair activity",
    "fairly active", "hesitating", "hesitation", "only fair", "slowdown",
    "readjusting", "half speed", "half time", "hampered", "waiting", "slack",
    "uncertain", "suspended", "many strikes", "contracted", "disturbed",
    "inactive", "short time", "retarded", "paralyzed", "irregular", "unsettled",
    "conservative",
)
BAD_WORDS = (
    "quiet", "dull", "slow", "very slow", "cautious", "interrupted", "light",
    "restricted", "below normal", "curtailed", "under normal", "poor",
    "lagging", "tardy", "delayed", "backward", "drag",
)
REDUCE_WORDS = (
    "reduced", "quieter", "slower", "slowing down", "smaller", "less active",
    "receding",
)
# "enlarging" appears twice in the source list; kept as printed.
INCREASE_WORDS = (
    "improved", "improving", "slightly better", "enlarging", "shifting",
    "enlarging", "improvement", "increasing",
)

_PUNCT = re.compile(r"[^a-z0-9/% ]+")


def normalize(text: str) -> str:
    """Lowercase, turn hyphens into spaces, drop punctuation except ``/`` and ``%``."""
    t = text.lower().replace("-", " ")
    t = _PUNCT.sub(" ", t)
    return " ".join(t.split())


def _build_lexicon():
    lex: dict[tuple[str, ...], tuple[str, int]] = {}
    for words, entry in (
        (GOOD_WORDS, ("base", Level.GOOD)),
        (FAIR_WORDS, ("base", Level.FAIR)),
        (BAD_WORDS, ("base", Level.BAD)),
        (REDUCE_WORDS, ("shift", -1)),
        (INCREASE_WORDS, ("shift", +1)),
    ):
        for w in words:
            key = tuple(normalize(w).split())
            if key in lex and lex[key] != entry:
                raise RuntimeError(f"phrase {w!r} listed with conflicting meanings")
            lex[key] = entry
    return lex


LEXICON = _build_lexicon()
_MAX_LEN = max(len(k) for k in LEXICON)


@dataclass(frozen=True)
class TradeRating:
    level: Level
    base: str
    shift: int = 0

    @property
    def binary(self) -> int:
        return 100 if self.level is Level.GOOD else 0


def _scan(tokens: list[str]):
    i = 0
    while i < len(tokens):
        for n in range(min(_MAX_LEN, len(tokens) - i), 0, -1):
            key = tuple(tokens[i : i + n])
            if key in LEXICON:
                yield " ".join(key), LEXICON[key]
                i += n
                break
        else:
            i += 1


def classify_snippet(text: str) -> TradeRating | None:
    """Rate a trade-condition report, or return None if it cannot be rated.

    Phrases are matched longest first, so "fair to good" is Fair and
    "slightly better" is a relative keyword, not "better". The first base
    phrase sets the level; relative keywords then move it by at most one
    notch, clamped to Bad..Good. A report holding only relative keywords is
    unrated.
    """
    tokens = normalize(text).split()
    base = None
    up = down = False
    for phrase, (kind, value) in _scan(tokens):
        if kind == "base":
            if base is None:
                base = (phrase, value)
        elif value > 0:
            up = True
        else:
            down = True
    if base is None:
        return None
    shift = int(up) - int(down)
    level = Level(min(max(int(base[1]) + shift, Level.BAD), Level.GOOD))
    return TradeRating(level, base[0], shift)


def classify_frame(snippets: pd.DataFrame) -> pd.DataFrame:
    """Add ``level`` and ``binary`` columns (NaN for unrated) to a snippet table."""
    ratings = [classify_snippet(t) for t in snippets["text"]]
    out = snippets.copy()
    out["level"] = [float(r.level) if r else np.nan for r in ratings]
    out["binary"] = [float(r.binary) if r else np.nan for r in ratings]
    return out


@dataclass
class AggregationReport:
    n_unclassified: int
    n_strike_excluded: int
    excluded_cities: dict[str, int]


def monthly_aggregate(
    snippets: pd.DataFrame, min_observations: int = 9
) -> tuple[pd.DataFrame, AggregationReport]:
    """City-sector-month means of the binary and three-level indexes.

    ``snippets`` needs ``city_id, sector, week_end_date, text, strike_flag``.
    Strike-flagged reports are dropped, then unrated reports, then cities
    with fewer than ``min_observations`` distinct reporting weeks. Months
    without reports are absent (never zero).
    """
    required = {"city_id", "sector", "week_end_date", "text", "strike_flag"}
    missing = required - set(snippets.columns)
    if missing:
        raise ValidationError(f"trade snippets missing columns {sorted(missing)}")
    bad_sector = set(snippets["sector"]) - set(SECTORS)
    if bad_sector:
        raise ValidationError(f"unknown sector(s) {sorted(bad_sector)}")
    strike = snippets["strike_flag"].astype(bool)
    df = classify_frame(snippets[~strike])
    unrated = int(df["binary"].isna().sum())
    df = df.dropna(subset=["binary"])
    weeks = df.groupby("city_id")["week_end_date"].nunique()
    few = weeks[weeks < min_observations]
    df = df[~df["city_id"].isin(few.index)]
    df = df.assign(month=pd.to_datetime(df["week_end_date"]).dt.to_period("M").astype(str))
    grouped = df.groupby(["city_id", "sector", "month"], sort=True)
    monthly = grouped.agg(binary=("binary", "mean"), level=("level", "mean"), n_obs=("binary", "size"))
    report = AggregationReport(unrated, int(strike.sum()), {str(k): int(v) for k, v in few.items()})
    return monthly.reset_index(), report


def combined_index(monthly: pd.DataFrame) -> pd.DataFrame:
    """Wide city-month table with one column per sector plus their simple mean.

    Sectors missing in a month are left out of the mean; ``n_sectors`` records
    how many entered it.
    """
    cols = ["city_id", "month", *SECTORS, "combined", "n_obs",
            *(f"{s}_level" for s in SECTORS), "combined_level", "n_sectors"]
    if monthly.empty:
        return pd.DataFrame(columns=cols)
    wide = monthly.pivot_table(index=["city_id", "month"], columns="sector", values="binary", aggfunc="first")
    lvl = monthly.pivot_table(index=["city_id", "month"], columns="sector", values="level", aggfunc="first")
    nobs = monthly.groupby(["city_id", "month"])["n_obs"].sum()
    wide = wide.reindex(columns=list(SECTORS))
    lvl = lvl.reindex(columns=list(SECTORS))
    out = wide.copy()
    out["combined"] = wide.mean(axis=1, skipna=True)
    out["n_obs"] = nobs
    for s in SECTORS:
        out[f"{s}_level"] = lvl[s]
    out["combined_level"] = lvl.mean(axis=1, skipna=True)
    out["n_sectors"] = wide.notna().sum(axis=1)
    out = out.reset_index()
    out.columns.name = None
    return out[cols]


def group_change(
    combined: pd.DataFrame, high_npi: dict[str, bool], start: str = "1918-09", end: str = "1919-02",
    column: str = "combined",
) -> dict[str, float]:
    """Mean change of ``column`` between two months, by High/Low NPI group.

    Only cities observed in both months enter a group's mean.
    """
    piv = combined.pivot_table(index="city_id", columns="month", values=column, aggfunc="first")
    if start not in piv.columns or end not in piv.columns:
        return {"high": np.nan, "low": np.nan}
    delta = (piv[end] - piv[start]).dropna()
    out = {}
    for name, flag in (("high", True), ("low", False)):
        cities = [c for c in delta.index if high_npi.get(c) is flag]
        out[name] = float(delta[cities].mean()) if cities else np.nan
    return out


def lexicon_entries() -> Iterable[tuple[str, Level]]:
    """Every base phrase with its level, in source order."""
    for words, level in ((GOOD_WORDS, Level.GOOD), (FAIR_WORDS, Level.FAIR), (BAD_WORDS, Level.BAD)):
        for w in words:
            yield w, level
