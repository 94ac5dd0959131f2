import datetime as dt
import re
import shutil
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import yaml

from epiflow.cli import main
from epiflow.errors import StageError, ValidationError
from epiflow.io import load_series, load_weekly_deaths, read_table, write_series, WEEKLY_DEATHS
from epiflow.manifest import load_manifest
from epiflow.pipeline import Pipeline, explain, run_pipeline
from epiflow.report import fmt_coef, fmt_rate
from epiflow.series import Frequency, TimeSeries

FIXTURE = Path(__file__).parent / "data" / "synthetic"
GOLDEN = FIXTURE / "golden"


@pytest.fixture
def fixture_dir(tmp_path):
    dst = tmp_path / "fx"
    shutil.copytree(FIXTURE, dst, ignore=shutil.ignore_patterns("golden", "out"))
    return dst


def run(fx: Path, target="report", **kw):
    return run_pipeline(load_manifest(fx / "manifest.yaml"), target, **kw)


def edit_manifest(fx: Path, **changes):
    m = yaml.safe_load((fx / "manifest.yaml").read_text())
    m.update(changes)
    (fx / "manifest.yaml").write_text(yaml.safe_dump(m))


def assert_frames_close(a: pd.DataFrame, b: pd.DataFrame):
    assert list(a.columns) == list(b.columns)
    assert len(a) == len(b)
    for c in a.columns:
        if pd.api.types.is_numeric_dtype(a[c]) and pd.api.types.is_numeric_dtype(b[c]):
            np.testing.assert_allclose(a[c].to_numpy(float), b[c].to_numpy(float), rtol=1e-9, atol=1e-12, err_msg=c)
        else:
            assert a[c].astype(str).tolist() == b[c].astype(str).tolist(), c


class TestGolden:
    @pytest.mark.parametrize("name", ["mortality_outcomes.csv", "npi_measures.csv", "trade_monthly.csv",
                                      "instrument.csv", "results.csv", "group_curves.csv", "report.csv"])
    def test_tables_match_golden(self, fixture_dir, name):
        run(fixture_dir)
        got = pd.read_csv(fixture_dir / "out" / name, dtype={"month": str, "value": str})
        want = pd.read_csv(GOLDEN / name, dtype={"month": str, "value": str})
        assert_frames_close(got, want)

    def test_markdown_matches_golden(self, fixture_dir):
        run(fixture_dir)
        assert (fixture_dir / "out" / "report.md").read_text() == (GOLDEN / "report.md").read_text()


def test_rerun_is_byte_identical_and_cached(fixture_dir, tmp_path):
    run(fixture_dir)
    out = fixture_dir / "out"
    first = {p.name: p.read_bytes() for p in out.iterdir() if p.is_file()}
    pipe = Pipeline(load_manifest(fixture_dir / "manifest.yaml"))
    pipe.run()
    assert all(pipe.cache_hits.values())
    Pipeline(load_manifest(fixture_dir / "manifest.yaml"), use_cache=False).run()
    again = {p.name: p.read_bytes() for p in out.iterdir() if p.is_file()}
    assert again == first
    # A second copy elsewhere yields the same bytes too.
    other = tmp_path / "copy"
    shutil.copytree(fixture_dir, other, ignore=shutil.ignore_patterns("out"))
    run(other)
    assert {p.name: p.read_bytes() for p in (other / "out").iterdir() if p.is_file()} == first


def test_changed_input_invalidates_only_dependent_stages(fixture_dir):
    run(fixture_dir)
    p = fixture_dir / "camps.csv"
    p.write_text(p.read_text().replace("devens", "devenz"))
    pipe = Pipeline(load_manifest(fixture_dir / "manifest.yaml"))
    pipe.run()
    assert pipe.cache_hits["reconstruct"] and pipe.cache_hits["classify"] and pipe.cache_hits["measures"]
    assert not pipe.cache_hits["instrument"] and not pipe.cache_hits["regress"]


def test_csv_and_markdown_share_rounded_values(fixture_dir):
    run(fixture_dir)
    out = fixture_dir / "out"
    long = pd.read_csv(out / "report.csv", dtype=str, keep_default_na=False)
    md_cells = set()
    for line in (out / "report.md").read_text().splitlines():
        if line.startswith("|") and not line.startswith("|---"):
            for cell in line.strip("|").split("|"):
                md_cells.add(cell.strip().strip("()"))
    assert set(long["value"]) <= md_cells
    se = long[long["row"].str.endswith("(se)") & (long["value"] != "")]
    md = (out / "report.md").read_text()
    for v in se["value"]:
        assert f"({v})" in md


def test_group_curves_shape(fixture_dir):
    run(fixture_dir, "measures")
    g = pd.read_csv(fixture_dir / "out" / "group_curves.csv")
    assert sorted(g["group"].unique()) == ["high", "low"]
    assert (g.groupby("group").size() == 19 * 7 + 1).all()
    assert g["weeks_since_acceleration"].max() == 19


def test_high_npi_flags_and_speed(fixture_dir):
    run(fixture_dir, "measures")
    npi = pd.read_csv(fixture_dir / "out" / "npi_measures.csv").set_index("city_id")
    # boise: 81 + 75 + 57 active days; first NPI 1918-10-01.
    assert npi.loc["boise", "intensity"] == 213
    accel = dt.date.fromisoformat(npi.loc["boise", "acceleration_date"])
    assert npi.loc["boise", "speed"] == (accel - dt.date(1918, 10, 1)).days
    assert npi["high_npi"].sum() == 3


def test_empty_city_manifest(tmp_path):
    for name, schema in [("weekly_deaths.csv", "city_id,cause,week_end_date,deaths"),
                         ("monthly_baseline.csv", "city_id,cause,month,year,rate_per_100k"),
                         ("population.csv", "city_id,pop_1910,pop_1920,pandemic_deaths"),
                         ("npi_intervals.csv", "city_id,category,start_date,end_date")]:
        (tmp_path / name).write_text(schema + "\n")
    (tmp_path / "m.yaml").write_text(yaml.safe_dump({
        "weekly_deaths": "weekly_deaths.csv", "monthly_baseline": "monthly_baseline.csv",
        "population": "population.csv", "npi_intervals": "npi_intervals.csv"}))
    with pytest.warns(UserWarning):
        code = main(["report", "--manifest", str(tmp_path / "m.yaml")])
    assert code == 0
    assert len(pd.read_csv(tmp_path / "out" / "mortality_outcomes.csv")) == 0
    assert len(pd.read_csv(tmp_path / "out" / "npi_measures.csv")) == 0
    assert (tmp_path / "out" / "report.md").is_file()


def test_nothing_configured_is_a_warning(tmp_path):
    (tmp_path / "m.yaml").write_text("")
    with pytest.warns(UserWarning, match="skipped"):
        assert main(["report", "--manifest", str(tmp_path / "m.yaml")]) == 0


class TestErrors:
    def test_malformed_row_reports_line(self, fixture_dir):
        p = fixture_dir / "weekly_deaths.csv"
        lines = p.read_text().splitlines()
        lines[4] = lines[4].rsplit(",", 1)[0] + ",seven"
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(StageError, match=r"weekly_deaths.csv:5: column deaths"):
            run(fixture_dir, "reconstruct")
        assert main(["reconstruct", "--manifest", str(fixture_dir / "manifest.yaml")]) == 2

    def test_not_a_saturday(self, fixture_dir):
        p = fixture_dir / "weekly_deaths.csv"
        p.write_text(p.read_text().replace("1918-08-31", "1918-08-30", 1))
        with pytest.raises(ValidationError, match=r":2: 1918-08-30 is not a week-ending Saturday"):
            load_weekly_deaths(p)

    def test_negative_deaths_rejected(self, tmp_path):
        p = tmp_path / "w.csv"
        p.write_text("city_id,cause,week_end_date,deaths\na,all_cause,1918-08-31,-1\n")
        with pytest.raises(ValidationError, match="w.csv:2"):
            read_table(p, WEEKLY_DEATHS)

    def test_missing_column(self, tmp_path):
        p = tmp_path / "w.csv"
        p.write_text("city_id,cause,deaths\n")
        with pytest.raises(ValidationError, match="missing column"):
            read_table(p, WEEKLY_DEATHS)

    def test_stage_error_names_city(self, fixture_dir):
        p = fixture_dir / "population.csv"
        p.write_text("\n".join(l for l in p.read_text().splitlines() if not l.startswith("elgin")) + "\n")
        with pytest.raises(StageError) as info:
            run(fixture_dir, "reconstruct")
        assert info.value.stage == "reconstruct" and info.value.city == "elgin"
        assert "row=" in str(info.value)

    def test_unknown_manifest_key(self, fixture_dir):
        edit_manifest(fixture_dir, smoothing=3)
        assert main(["report", "--manifest", str(fixture_dir / "manifest.yaml")]) == 2

    def test_window_must_be_whole_weeks(self, fixture_dir):
        edit_manifest(fixture_dir, window_end="1919-02-20")
        with pytest.raises(ValidationError, match="whole weeks"):
            load_manifest(fixture_dir / "manifest.yaml")

    def test_missing_input_file(self, fixture_dir):
        (fixture_dir / "camps.csv").unlink()
        with pytest.raises(ValidationError, match="camps"):
            load_manifest(fixture_dir / "manifest.yaml")

    def test_estimation_error_exit_code(self, fixture_dir):
        edit_manifest(fixture_dir, regressions=[{"name": "bad", "data": "mortality", "outcome": "peak_edr",
                                                 "treatment": "log_pop_1910", "controls": ["log_pop_1910"]}])
        assert main(["regress", "--manifest", str(fixture_dir / "manifest.yaml")]) == 3


def test_explain_resolves_input_rows(fixture_dir):
    run(fixture_dir)
    m = load_manifest(fixture_dir / "manifest.yaml")
    text = explain(m, "mortality_outcomes:boise/influenza_pneumonia:peak_weekly_edr")
    assert re.search(r"weekly_deaths.csv \(sha256 [0-9a-f]{12}\): .*29 row\(s\), lines \d+-\d+", text)
    assert "population.csv" in text
    text = explain(m, "trade_monthly:akron/1918-10:combined")
    assert "trade_snippets.csv" in text
    text = explain(m, "instrument:elgin:z")
    assert "camps.csv" in text and "locations.csv" in text
    with pytest.raises(ValidationError):
        explain(m, "instrument:nowhere:z")


def test_cli_adhoc_regress(fixture_dir):
    out = fixture_dir / "adhoc"
    code = main(["regress", "--manifest", str(fixture_dir / "manifest.yaml"), "--data", "trade",
                 "--outcome", "combined", "--treatment", "high_npi", "--fe", "city,month", "--cluster", "city",
                 "--post-from", "1918-08", "--cov", "cluster", "--output", str(out)])
    assert code == 0
    res = pd.read_csv(out / "results.csv")
    assert list(res.columns) == ["model", "term", "estimate", "se", "t", "p", "ci_lo", "ci_hi"]
    golden = pd.read_csv(GOLDEN / "results.csv").set_index(["model", "term"])
    assert res["estimate"].iloc[0] == pytest.approx(golden.loc[("trade_did", "high_npi_x_post"), "estimate"])


def test_cli_regress_from_csv(tmp_path):
    rng = np.random.default_rng(0)
    df = pd.DataFrame({"city_id": [f"c{i}" for i in range(30)], "x": rng.normal(size=30), "z": rng.normal(size=30)})
    df["y"] = 1 + 2 * df.x + rng.normal(size=30)
    df.to_csv(tmp_path / "d.csv", index=False)
    code = main(["regress", "--data", str(tmp_path / "d.csv"), "--outcome", "y", "--treatment", "x",
                 "--controls", "z", "--oster", "--output", str(tmp_path / "o")])
    assert code == 0
    meta = yaml.safe_load((tmp_path / "o" / "results.meta.json").read_text())
    assert meta["cli"]["oster"]["r_max"] == pytest.approx(min(1, 1.3 * meta["cli"]["r2"]))


def test_cli_regress_csv_with_city_alias_and_fe(tmp_path):
    rng = np.random.default_rng(1)
    city = np.repeat([f"c{i}" for i in range(10)], 5)
    year = np.tile([1904, 1909, 1914, 1919, 1921], 10)
    df = pd.DataFrame({"city": city, "year": year, "x": rng.normal(size=50)})
    df["y"] = 0.5 * df.x + rng.normal(size=50)
    df.to_csv(tmp_path / "p.csv", index=False)
    args = ["regress", "--data", str(tmp_path / "p.csv"), "--outcome", "y", "--treatment", "x",
            "--fe", "city,year", "--cov", "cluster", "--cluster", "city", "--output", str(tmp_path / "o")]
    assert main(args) == 0
    res = pd.read_csv(tmp_path / "o" / "results.csv")
    assert res["term"].tolist() == ["x"]
    assert main(args[:-4] + ["--cluster", "state", "--output", str(tmp_path / "o2")]) == 2

def test_series_csv_roundtrip(tmp_path):
    weekly = TimeSeries.from_periods([dt.date(1918, 9, 14) + dt.timedelta(weeks=i) for i in range(4)],
                                     [1.0, np.nan, 3.0, 4.5], Frequency.WEEKLY)
    monthly = TimeSeries.from_periods([dt.date(1918, m, 1) for m in (1, 2, 3)], [2.0, 2.5, 3.0], Frequency.MONTHLY)
    write_series(tmp_path / "s.csv", {"w": weekly, "m": monthly})
    back = load_series(tmp_path / "s.csv")
    np.testing.assert_array_equal(back["w"].values, weekly.values)
    assert back["m"].labels == monthly.labels and back["m"].frequency is Frequency.MONTHLY
    assert "1918-02-28" in (tmp_path / "s.csv").read_text()


def test_series_csv_needs_sidecar(tmp_path):
    (tmp_path / "s.csv").write_text("series_id,period_end_date,value\na,1918-01-31,1\n")
    with pytest.raises(ValidationError, match="sidecar"):
        load_series(tmp_path / "s.csv")
    (tmp_path / "s.meta.yaml").write_text("frequency: monthly\n")
    assert load_series(tmp_path / "s.csv")["a"].labels == [dt.date(1918, 1, 1)]
    (tmp_path / "s.csv").write_text("series_id,period_end_date,value\na,1918-01-30,1\n")
    with pytest.raises(ValidationError, match=":2: 1918-01-30 is not a month end"):
        load_series(tmp_path / "s.csv")


@pytest.mark.parametrize("x, want", [(1234.5, "1230"), (0.0012345, "0.00123"), (-24.07, "-24.1"), (9.9996, "10.0"),
                                     (0.0, "0"), (float("nan"), ""), (-0.0004, "-0.000400"), (100.0, "100")])
def test_fmt_coef(x, want):
    assert fmt_coef(x) == want


@pytest.mark.parametrize("x, want", [(267.14, "267.1"), (-0.04, "0.0"), (37.55, "37.5"), (None, "")])
def test_fmt_rate(x, want):
    # 37.55 is stored just below the midpoint, so it rounds down.
    assert fmt_rate(x) == want
