"""Write the bundled six-city synthetic fixture (CSVs plus manifest).

Every number is drawn from a seeded generator, so re-running reproduces the
fixture byte for byte. The epidemic curves, NPI dates and trade reports are
made up; they only need to exercise every code path of the pipeline.

    python scripts/make_synthetic_fixture.py --out tests/data/synthetic
"""
import argparse
import datetime as dt
import math
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from epiflow.trade import BAD_WORDS, FAIR_WORDS, GOOD_WORDS

CITIES = {
    # city: (lat, lon, pop_1910, pop_1920, peak week offset, peak height per 100k)
    "akron": (41.08, -81.52, 69_000, 208_000, 5, 60.0),
    "boise": (43.62, -116.20, 17_000, 21_000, 8, 35.0),
    "camden": (39.93, -75.12, 94_500, 116_300, 4, 95.0),
    "dayton": (39.76, -84.19, 116_600, 153_000, 6, 55.0),
    "elgin": (42.04, -88.28, 25_900, 27_500, 7, 45.0),
    "fresno": (36.74, -119.79, 24_900, 45_000, 9, 40.0),
}
CAMPS = {"devens": (42.54, -71.61), "funston": (39.06, -96.79), "grant": (42.20, -89.10), "kearny": (32.77, -117.18)}
FIRST_WEEK = dt.date(1918, 8, 31)
N_WEEKS = 29
CAUSES = ("influenza_pneumonia", "all_cause")
SNIPPET_SECTORS = ("wholesale", "retail", "manufacturing")


def seasonal(month: int, base: float, amp: float) -> float:
    return base * (1 + amp * math.cos(2 * math.pi * (month - 1) / 12))


def weekly_deaths(rng, out):
    rows = []
    for city, (_, _, p10, p20, off, height) in CITIES.items():
        pop = p10 * (p20 / p10) ** 0.85
        for cause in CAUSES:
            extra = 0.0 if cause == "influenza_pneumonia" else 25.0
            for w in range(N_WEEKS):
                end = FIRST_WEEK + dt.timedelta(weeks=w)
                base = seasonal(end.month, 3.0, 0.4) + extra
                wave = height * math.exp(-0.5 * ((w - off) / 1.6) ** 2)
                wave += 0.25 * height * math.exp(-0.5 * ((w - off - 12) / 2.0) ** 2)
                rate = base + wave * (1 if cause == "influenza_pneumonia" else 1.15)
                deaths = rng.poisson(rate * pop / 100_000)
                cell = "" if (city == "dayton" and cause == "all_cause" and w == 15) else str(int(deaths))
                rows.append((city, cause, end.isoformat(), cell))
    pd.DataFrame(rows, columns=["city_id", "cause", "week_end_date", "deaths"]).to_csv(
        out / "weekly_deaths.csv", index=False, lineterminator="\n")


def monthly_baseline(rng, out):
    rows = []
    for city in CITIES:
        for cause in CAUSES:
            extra = 0.0 if cause == "influenza_pneumonia" else 25.0
            for year in range(1910, 1917):
                for month in range(1, 13):
                    v = seasonal(month, 3.0, 0.4) + extra + rng.normal(0, 0.2)
                    rows.append((city, cause, month, year, f"{max(v, 0.1):.3f}"))
    pd.DataFrame(rows, columns=["city_id", "cause", "month", "year", "rate_per_100k"]).to_csv(
        out / "monthly_baseline.csv", index=False, lineterminator="\n")


def population(out):
    rows = []
    for city, (_, _, p10, p20, _, height) in CITIES.items():
        rows.append((city, p10, p20, int(round(p10 * height * 3 / 100_000))))
    pd.DataFrame(rows, columns=["city_id", "pop_1910", "pop_1920", "pandemic_deaths"]).to_csv(
        out / "population.csv", index=False, lineterminator="\n")


def npi_intervals(out):
    # Earlier and longer interventions in the cities with later, lower peaks.
    plans = {
        "akron": [("school_closure", "1918-10-09", "1918-11-04"), ("public_gathering_ban", "1918-10-10", "1918-11-04")],
        "boise": [("school_closure", "1918-10-01", "1918-12-20"), ("public_gathering_ban", "1918-10-02", "1918-12-15"),
                  ("other_quarantine_isolation", "1918-10-05", "1918-11-30")],
        "camden": [("school_closure", "1918-10-12", "1918-10-30")],
        "dayton": [("school_closure", "1918-10-08", "1918-11-10"), ("public_gathering_ban", "1918-10-20", "1918-11-08")],
        "elgin": [("school_closure", "1918-10-03", "1918-11-25"), ("public_gathering_ban", "1918-10-03", "1918-11-02"),
                  ("public_gathering_ban", "1918-11-20", "1918-12-10"),
                  ("other_quarantine_isolation", "1918-10-04", "1918-11-15")],
        "fresno": [("school_closure", "1918-10-02", "1918-12-31"), ("public_gathering_ban", "1918-10-04", "1919-01-20"),
                   ("other_quarantine_isolation", "1918-10-04", "1918-12-01")],
    }
    rows = [(c, cat, s, e) for c, ivs in plans.items() for cat, s, e in ivs]
    pd.DataFrame(rows, columns=["city_id", "category", "start_date", "end_date"]).to_csv(
        out / "npi_intervals.csv", index=False, lineterminator="\n")


def trade_snippets(rng, out):
    high = {"boise", "elgin", "fresno"}
    rows = []
    week = dt.date(1918, 1, 5)
    while week <= dt.date(1919, 3, 29):
        in_wave = dt.date(1918, 10, 1) <= week <= dt.date(1918, 12, 31)
        for city in CITIES:
            if city == "camden" and week > dt.date(1918, 2, 20):
                continue  # too few reporting weeks; dropped by the minimum-observation rule
            for sector in SNIPPET_SECTORS:
                if rng.random() < 0.35:
                    continue
                p_bad = 0.15 + (0.45 if in_wave and city in high else 0.3 if in_wave else 0.0)
                u = rng.random()
                if u < p_bad:
                    text = str(rng.choice(BAD_WORDS))
                elif u < p_bad + 0.3:
                    text = str(rng.choice(FAIR_WORDS[:10]))
                else:
                    text = str(rng.choice(GOOD_WORDS))
                if rng.random() < 0.1:
                    text = "improved, " + text
                strike = int(rng.random() < 0.02)
                rows.append((city, sector, week.isoformat(), text.capitalize(), strike))
        week += dt.timedelta(weeks=1)
    rows.append(("akron", "retail", "1918-05-04", "Unreadable entry", 0))
    pd.DataFrame(rows, columns=["city_id", "sector", "week_end_date", "text", "strike_flag"]).to_csv(
        out / "trade_snippets.csv", index=False, lineterminator="\n")


def camps(rng, out):
    rows = []
    for camp, (lat, lon) in CAMPS.items():
        base = rng.integers(15_000, 45_000)
        for month in ("1918-06", "1918-07", "1918-08", "1918-09", "1918-10"):
            if camp == "kearny" and month == "1918-08":
                continue
            rows.append((camp, lat, lon, month, int(base * (1 + 0.1 * rng.normal()))))
    pd.DataFrame(rows, columns=["camp_id", "lat", "lon", "month", "strength"]).to_csv(
        out / "camps.csv", index=False, lineterminator="\n")
    pd.DataFrame([(c, v[0], v[1]) for c, v in CITIES.items()], columns=["location_id", "lat", "lon"]).to_csv(
        out / "locations.csv", index=False, lineterminator="\n")


def covariates_and_panel(rng, out):
    rows = []
    for city, (lat, lon, p10, _, _, height) in CITIES.items():
        p00 = p10 / (1.2 + 0.3 * rng.random())
        rows.append((city, round(math.log(p00), 6), round(math.log(p10), 6),
                     round(rng.uniform(0.05, 0.25), 6), round(rng.uniform(2_000, 9_000), 1),
                     round(rng.uniform(0.5, 2.5), 4)))
    cov = pd.DataFrame(rows, columns=["city_id", "log_pop_1900", "log_pop_1910", "mfg_emp_1914_per_pop_1910",
                                      "density_1910", "health_spending_pc_1917"])
    cov.to_csv(out / "city_covariates.csv", index=False, lineterminator="\n")
    prow = []
    for city, (_, _, p10, _, _, height) in CITIES.items():
        level = math.log(p10) - 2.0
        for year in (1904, 1909, 1914, 1919, 1921):
            growth = 0.02 * (year - 1904)
            shock = 0.002 * height if year >= 1919 else 0.0
            prow.append((city, year, round(level + growth + shock + rng.normal(0, 0.01), 6)))
    pd.DataFrame(prow, columns=["city_id", "year", "log_mfg_emp"]).to_csv(
        out / "panel.csv", index=False, lineterminator="\n")


def manifest(out):
    m = {
        "output_dir": "out",
        "weekly_deaths": "weekly_deaths.csv",
        "monthly_baseline": "monthly_baseline.csv",
        "population": "population.csv",
        "npi_intervals": "npi_intervals.csv",
        "trade_snippets": "trade_snippets.csv",
        "camps": "camps.csv",
        "locations": "locations.csv",
        "city_covariates": "city_covariates.csv",
        "panel": "panel.csv",
        # Six cities cannot carry five controls; the fixture uses two.
        "baseline_controls": ["log_pop_1910", "mfg_emp_1914_per_pop_1910"],
        "regressions": [
            {"name": "peak_npi", "table": "Mortality and NPIs", "data": "mortality",
             "outcome": "peak_edr", "treatment": "high_npi"},
            {"name": "peak_npi_controls", "table": "Mortality and NPIs", "data": "mortality",
             "outcome": "peak_edr", "treatment": "high_npi", "controls": ["log_pop_1910"], "oster": True},
            {"name": "cumulative_npi", "table": "Mortality and NPIs", "data": "mortality",
             "outcome": "cumulative_edr", "treatment": "high_npi"},
            {"name": "trade_did", "table": "Trade disruption", "data": "trade", "outcome": "combined",
             "treatment": "high_npi", "post_from": True, "level": 0.90},
            {"name": "mfg_event", "table": "Manufacturing employment", "data": "panel", "outcome": "log_mfg_emp",
             "treatment": "peak_edr", "base_period": True},
        ],
    }
    (out / "manifest.yaml").write_text(yaml.safe_dump(m, sort_keys=False))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("tests/data/synthetic"))
    ap.add_argument("--seed", type=int, default=1918)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    weekly_deaths(rng, args.out)
    monthly_baseline(rng, args.out)
    population(args.out)
    npi_intervals(args.out)
    trade_snippets(rng, args.out)
    camps(rng, args.out)
    covariates_and_panel(rng, args.out)
    manifest(args.out)
    print(f"fixture written to {args.out}")


if __name__ == "__main__":
    main()
