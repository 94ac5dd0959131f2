import shutil
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import yaml

from epiflow import replication
from epiflow.manifest import load_manifest
from epiflow.pipeline import Pipeline

FIXTURE = Path(__file__).parent / "data" / "synthetic"


@pytest.fixture(scope="module")
def pipe(tmp_path_factory):
    dst = tmp_path_factory.mktemp("rep") / "fx"
    shutil.copytree(FIXTURE, dst, ignore=shutil.ignore_patterns("golden", "out"))
    m = yaml.safe_load((dst / "manifest.yaml").read_text())
    # Six cities: keep the cross-section small enough to estimate.
    m["baseline_controls"] = ["log_pop_1910"]
    m["extended_controls"] = []
    (dst / "manifest.yaml").write_text(yaml.safe_dump(m))
    p = Pipeline(load_manifest(dst / "manifest.yaml"))
    for stage in ("reconstruct", "measures", "classify", "instrument"):
        p.run(stage)
    return p


def test_normalize_city():
    assert replication.normalize_city("St. Paul") == "stpaul"
    assert replication.normalize_city("Saint Paul") == "stpaul"
    assert replication.normalize_city("San Francisco") == "sanfrancisco"


def test_group_means_cover_the_classified_sample(pipe):
    g = replication.npi_group_means(pipe)
    npi = pd.read_csv(pipe.out / "npi_measures.csv").dropna(subset=["high_npi"])
    assert g["high"]["n"] + g["low"]["n"] == len(npi)
    assert g["high"]["intensity"] > g["low"]["intensity"]


def test_city_outcomes_by_loose_name(pipe):
    rows = replication.city_outcomes(pipe, ["Akron", "BOISE"])
    assert list(rows["city_id"]) == ["akron", "boise"]
    assert (rows["cumulative_edr"] > 0).all()


def test_acceleration_agreement_self_is_zero(pipe):
    mo = pd.read_csv(pipe.out / "mortality_outcomes.csv")
    mine = mo[mo["cause"] == pipe.m.acceleration_cause][["city_id", "acceleration_date"]].dropna()
    agree = replication.acceleration_agreement(pipe, mine)
    assert len(agree) == len(mine)
    assert (agree["diff_days"] == 0).all()


def test_headline_helpers_return_finite_numbers(pipe):
    d = replication.trade_decline(pipe)
    assert set(d) == {"high", "low"}
    did = replication.did_headline(pipe)
    assert did["ci_lo"] < did["estimate"] < did["ci_hi"]
    es = replication.event_study_headline(pipe)
    assert es["ci_lo"] < es["estimate"] < es["ci_hi"]
    assert np.isfinite(replication.first_stage_F(pipe, mortality="peak_edr"))
    assert np.isfinite(replication.peak_reduction_share(pipe))
