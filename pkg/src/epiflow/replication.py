"""Summary statistics for a full historical run: group means, city case
studies, acceleration-date agreement and the headline regressions.

All functions read the outputs of a finished :class:`~epiflow.pipeline.Pipeline`
run; none of them has tuning knobs beyond the manifest.
"""
from __future__ import annotations

import re

import numpy as np
import pandas as pd

from .econometrics import RegressionSpec, cross_section, event_study
from .pipeline import Pipeline, _read_csv


def normalize_city(name: str) -> str:
    key = re.sub(r"[^a-z]", "", str(name).lower())
    return {"saintpaul": "stpaul"}.get(key, key)


def _by_city(df: pd.DataFrame) -> pd.DataFrame:
    df = df.copy()
    df["_key"] = df["city_id"].map(normalize_city)
    return df.set_index("_key")


def npi_group_means(pipe: Pipeline) -> dict[str, dict[str, float]]:
    npi = _read_csv(pipe.out / "npi_measures.csv").dropna(subset=["high_npi"])
    out = {}
    for name, flag in (("high", 1), ("low", 0)):
        g = npi[npi["high_npi"] == flag]
        out[name] = {"intensity": float(g["intensity"].mean()), "speed": float(g["speed"].mean()), "n": len(g)}
    return out


def city_outcomes(pipe: Pipeline, cities, cause: str | None = None) -> pd.DataFrame:
    """Peak weekly and cumulative excess rates for the named cities."""
    mo = _read_csv(pipe.out / "mortality_outcomes.csv")
    mo = _by_city(mo[mo["cause"] == (cause or pipe.m.acceleration_cause)])
    keys = [normalize_city(c) for c in cities]
    return mo.reindex(keys)[["city_id", "peak_weekly_edr", "cumulative_edr", "acceleration_date"]]


def acceleration_agreement(pipe: Pipeline, published: pd.DataFrame) -> pd.DataFrame:
    """Day differences between computed and published acceleration dates."""
    mo = _read_csv(pipe.out / "mortality_outcomes.csv")
    mo = _by_city(mo[mo["cause"] == pipe.m.acceleration_cause])
    pub = _by_city(published)
    keys = sorted(set(mo.index) & set(pub.index))
    ours = pd.to_datetime(mo.loc[keys, "acceleration_date"])
    theirs = pd.to_datetime(pub.loc[keys, "acceleration_date"])
    return pd.DataFrame({"city": keys, "computed": ours.dt.date.values, "published": theirs.dt.date.values,
                         "diff_days": (ours.values - theirs.values).astype("timedelta64[D]").astype(float)})


def trade_decline(pipe: Pipeline, start: str = "1918-09", end: str = "1919-02") -> dict[str, float]:
    from .trade import group_change

    trade = _read_csv(pipe.out / "trade_monthly.csv")
    npi = _read_csv(pipe.out / "npi_measures.csv").dropna(subset=["high_npi"])
    flags = {c: bool(h) for c, h in zip(npi["city_id"], npi["high_npi"])}
    return group_change(trade, flags, start, end)


def did_headline(pipe: Pipeline, controls: str = "baseline", level: float = 0.90) -> dict[str, float]:
    entry = {"name": "did", "data": "trade", "outcome": "combined", "treatment": "high_npi",
             "controls": controls, "post_from": True, "level": level}
    tidy, meta = pipe.fit_model(entry)
    row = tidy.set_index("term").loc["high_npi_x_post"]
    return {"estimate": row.estimate, "ci_lo": row.ci_lo, "ci_hi": row.ci_hi, "nobs": meta["nobs"]}


def event_study_headline(pipe: Pipeline, outcome: str = "log_mfg_emp", controls: str = "baseline",
                         period=1919, level: float = 0.95) -> dict[str, float]:
    df = pipe.dataset("panel")
    spec = RegressionSpec(outcome, "high_npi", pipe.m.controls(controls), base_period=pipe.m.base_year,
                          cov=pipe.m.cov_panel)
    path = event_study(df, spec).path(level).set_index("period")
    row = path.loc[period]
    return {"estimate": row.estimate, "ci_lo": row.ci_lo, "ci_hi": row.ci_hi}


def first_stage_F(pipe: Pipeline, mortality: str = "mortality_1918", controls: str | None = None) -> float:
    """Robust Wald F of the camp instrument in the cross-city mortality regression."""
    df = pipe.dataset("mortality")
    res = cross_section(df, RegressionSpec(mortality, "z", pipe.m.controls(controls), cov=pipe.m.cov_cross_section))
    t = res.coef("z") / res.stderr("z")
    return float(t * t)


def peak_reduction_share(pipe: Pipeline, controls: str = "extended") -> float:
    """High-NPI coefficient on peak excess mortality divided by the outcome mean."""
    df = pipe.dataset("mortality")
    spec = RegressionSpec("peak_edr", "high_npi", pipe.m.controls(controls), cov=pipe.m.cov_cross_section)
    res = cross_section(df, spec)
    used = df.dropna(subset=["peak_edr", "high_npi", *spec.controls])
    return float(res.coef("high_npi") / np.mean(used["peak_edr"]))
