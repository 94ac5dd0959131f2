"""Run the full pipeline on user-supplied historical inputs and print the
headline statistics next to their published values.

    python scripts/reproduce_historical.py --manifest /data/hist/manifest.yaml \
        [--published-acceleration /data/hist/published_acceleration.csv]
"""
import argparse

import pandas as pd

from epiflow import replication as rp
from epiflow.manifest import load_manifest
from epiflow.pipeline import Pipeline


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--manifest", required=True)
    ap.add_argument("--published-acceleration")
    ap.add_argument("--mortality-column", default="mortality_1918")
    args = ap.parse_args()

    pipe = Pipeline(load_manifest(args.manifest))
    pipe.run("report")
    g = rp.npi_group_means(pipe)
    print(f"NPI intensity high/low: {g['high']['intensity']:.1f} / {g['low']['intensity']:.1f}  (published 133 / 56)")
    print(f"NPI speed high/low:     {g['high']['speed']:.1f} / {g['low']['speed']:.1f}  (published -1.5 / -12)")
    print(f"High/low NPI cities:    {g['high']['n']} / {g['low']['n']}  (published 18 / 28)")
    print(rp.city_outcomes(pipe, ["Minneapolis", "St. Paul", "San Francisco", "Oakland"]).to_string())
    print("published: peak 37.6 / 55.5, cumulative 267.1 / 413.2 (Minneapolis / St. Paul); "
          "cumulative 672.7 / 506.2 (San Francisco / Oakland)")
    if args.published_acceleration:
        agree = rp.acceleration_agreement(pipe, pd.read_csv(args.published_acceleration))
        print(agree.to_string(index=False))
    t = rp.trade_decline(pipe)
    print(f"Trade index change Sep 1918 -> Feb 1919 high/low: {t['high']:.1f} / {t['low']:.1f}  (published -41 / -52)")
    d = rp.did_headline(pipe)
    print(f"DiD High NPI x Post: {d['estimate']:.2f}  90% CI ({d['ci_lo']:.1f}, {d['ci_hi']:.1f})  "
          "(published -5.0, (-14.7, 4.6))")
    e = rp.event_study_headline(pipe)
    print(f"Event study 1919: {e['estimate']:.3f}  95% CI ({e['ci_lo']:.2f}, {e['ci_hi']:.2f})  "
          "(published 0.10, (-0.01, 0.20))")
    for controls, pub in ((None, 19.9), ("baseline", 13.6)):
        print(f"First-stage F ({controls or 'no'} controls): "
              f"{rp.first_stage_F(pipe, args.mortality_column, controls):.1f}  (published {pub})")
    print(f"High-NPI peak coefficient / mean: {rp.peak_reduction_share(pipe):.2f}  (published about -0.5)")


if __name__ == "__main__":
    main()
