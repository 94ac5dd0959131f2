"""Stage graph: reconstruct -> measures -> classify -> instrument -> regress -> report.

Each stage reads its inputs (manifest CSVs and upstream outputs), writes its
outputs into the manifest's output directory and records a provenance entry
with the content hashes of everything it read and wrote. A stage whose cache
key (parameters, input hashes, upstream keys) is unchanged and whose outputs
are intact is skipped. Outputs are written deterministically, so identical
inputs give byte-identical files.
"""
from __future__ import annotations

import datetime as dt
import hashlib
import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .econometrics import RegressionSpec, estimate, oster_for
from .errors import EpiflowError, EstimationError, StageError, ValidationError
from .instrument import CampRecord, instrument_table
from .io import (
    file_hash,
    load_camps,
    load_locations,
    load_monthly_baseline,
    load_npi_intervals,
    load_population,
    load_table,
    load_trade_snippets,
    load_weekly_deaths,
    write_csv,
    write_json,
)
from .manifest import Manifest
from .mortality import (
    Cause,
    align_and_average,
    baseline_monthly_median,
    estimate_pop_1918,
    excess_rates,
    mortality_outcomes,
    weekly_series_from_counts,
)
from .npi import NpiRecord, compute_measures, parse_category
from .report import ReportBundle, emit_report
from .series import CalendarGrid, Frequency, TimeSeries, impute_linear
from .trade import combined_index, group_change, monthly_aggregate

log = logging.getLogger(__name__)

STAGES = ("reconstruct", "measures", "classify", "instrument", "regress", "report")
UPSTREAM = {
    "reconstruct": (),
    "measures": ("reconstruct",),
    "classify": (),
    "instrument": (),
    "regress": ("reconstruct", "measures", "classify", "instrument"),
    "report": ("reconstruct", "measures", "classify", "instrument", "regress"),
}
INPUTS = {
    "reconstruct": ("weekly_deaths", "monthly_baseline", "population"),
    "measures": ("npi_intervals",),
    "classify": ("trade_snippets",),
    "instrument": ("camps", "locations"),
    "regress": ("city_covariates", "panel"),
    "report": (),
}
PARAMS = {
    "reconstruct": ("scale", "window_start", "window_end", "weekly_bandwidth", "monthly_bandwidth",
                    "baseline_years", "baseline_basis", "max_impute_gap"),
    "measures": ("window_start", "window_end", "acceleration_cause", "horizon_weeks"),
    "classify": ("min_trade_observations",),
    "instrument": ("strength_window",),
    "regress": ("acceleration_cause", "did_window", "post_from", "base_year", "cov_cross_section", "cov_panel",
                "baseline_controls", "extended_controls", "regressions"),
    "report": ("acceleration_cause", "window_start", "window_end"),
}
OUTPUTS = {
    "reconstruct": ("mortality_outcomes.csv", "daily_curves.csv", "weekly_curves.csv", "reconstruct.diagnostics.json"),
    "measures": ("npi_measures.csv", "npi_measures.provenance.json", "group_curves.csv"),
    "classify": ("trade_monthly.csv", "classify.diagnostics.json"),
    "instrument": ("instrument.csv",),
    "regress": ("results.csv", "results.meta.json"),
    "report": ("report.csv", "report.md", "diagnostics.json"),
}

MORTALITY_COLUMNS = ["city_id", "cause", "pop_1918", "acceleration_date", "peak_weekly_edr", "peak_date",
                     "cumulative_edr", "second_peak_flag", "n_imputed", "n_negative_smoothed"]
NPI_COLUMNS = ["city_id", "intensity", "speed", "high_npi", "intensity_exclusive", "first_response_date",
               "acceleration_date"]
INSTRUMENT_COLUMNS = ["location_id", "z", "n_camps", "unit"]
RESULT_COLUMNS = ["model", "term", "estimate", "se", "t", "p", "ci_lo", "ci_hi"]


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, default=str, separators=(",", ":"))


def _first_line(df: pd.DataFrame):
    return int(df["line"].min()) if len(df) and "line" in df else None


def _wrap(stage: str, exc: Exception, city=None, row=None) -> StageError:
    return StageError(stage, exc, city=city, row=row)


def _read_csv(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, dtype={"city_id": str, "location_id": str, "month": str})


class Pipeline:
    def __init__(self, manifest: Manifest, use_cache: bool = True, workers: int = 4):
        self.m = manifest
        self.out = manifest.out
        self.use_cache = use_cache
        self.workers = workers
        self.keys: dict[str, str] = {}
        self.cache_hits: dict[str, bool] = {}

    # -- bookkeeping -------------------------------------------------------

    def _input_hashes(self, stage: str) -> dict:
        out = {}
        for key in INPUTS[stage]:
            p = self.m.path(key)
            if p is not None:
                out[key] = {"path": getattr(self.m, key), "sha256": file_hash(p)}
        return out

    def _cache_key(self, stage: str) -> str:
        params = {k: getattr(self.m, k) for k in PARAMS[stage]}
        blob = _canonical({
            "stage": stage,
            "version": __version__,
            "params": params,
            "inputs": self._input_hashes(stage),
            "upstream": {u: self.keys[u] for u in UPSTREAM[stage]},
        })
        return hashlib.sha256(blob.encode()).hexdigest()

    def _cache_file(self, stage: str) -> Path:
        return self.out / ".cache" / f"{stage}.json"

    def _cached(self, stage: str, key: str) -> bool:
        f = self._cache_file(stage)
        if not (self.use_cache and f.is_file()):
            return False
        entry = json.loads(f.read_text())
        if entry.get("key") != key:
            return False
        for name, h in entry.get("outputs", {}).items():
            p = self.out / name
            if not p.is_file() or file_hash(p) != h:
                return False
        return True

    def _record(self, stage: str, key: str, written: list[str]):
        outputs = {name: file_hash(self.out / name) for name in sorted(written)}
        entry = {
            "stage": stage,
            "key": key,
            "params": {k: getattr(self.m, k) for k in PARAMS[stage]},
            "inputs": self._input_hashes(stage),
            "upstream": {u: self.keys[u] for u in UPSTREAM[stage]},
            "outputs": outputs,
        }
        write_json(entry, self._cache_file(stage))
        prov_path = self.out / "provenance.json"
        prov = json.loads(prov_path.read_text()) if prov_path.is_file() else {}
        prov[stage] = entry
        write_json(prov, prov_path)

    # -- driver ------------------------------------------------------------

    def run(self, target: str = "report") -> ReportBundle:
        if target not in STAGES:
            raise ValidationError(f"unknown stage {target!r}")
        order = [s for s in STAGES if s == target or s in UPSTREAM[target]]
        self.out.mkdir(parents=True, exist_ok=True)
        for stage in order:
            key = self._cache_key(stage)
            self.keys[stage] = key
            if self._cached(stage, key):
                log.info("%s: cache hit", stage)
                self.cache_hits[stage] = True
                continue
            self.cache_hits[stage] = False
            for name in OUTPUTS[stage]:
                (self.out / name).unlink(missing_ok=True)
            try:
                written = getattr(self, f"_stage_{stage}")()
            except StageError:
                raise
            except EpiflowError as exc:
                raise _wrap(stage, exc) from exc
            self._record(stage, key, written)
        return self.bundle()

    def _write(self, df: pd.DataFrame, name: str, written: list[str]):
        write_csv(df, self.out / name)
        written.append(name)

    def _write_json(self, obj, name: str, written: list[str]):
        write_json(obj, self.out / name)
        written.append(name)

    def _skip(self, stage: str, why: str) -> list[str]:
        warnings.warn(f"stage {stage} skipped: {why}")
        return []

    # -- reconstruct -------------------------------------------------------

    def _reconstruct_city(self, city, cause, deaths, baseline, pop):
        cfg = self.m.mortality_config()
        try:
            if pop is None:
                raise ValidationError("no population record")
            wdc = weekly_series_from_counts(list(deaths["week_end_date"]), list(deaths["deaths"]))
            wdc, n_imp = impute_linear(wdc, cfg.max_impute_gap)
            lo, hi = self.m.baseline_years
            years = {}
            for y in range(lo, hi + 1):
                rows = baseline[baseline["year"] == y]
                if len(rows):
                    vals = [np.nan] * 12
                    for mth, v in zip(rows["month"], rows["rate_per_100k"]):
                        vals[int(mth) - 1] = v * cfg.scale / 100_000.0
                    years[y] = vals
            medians = baseline_monthly_median(years)
            p1918 = estimate_pop_1918(pop["pop_1910"], pop["pop_1920"], pop["pandemic_deaths"])
            curves = excess_rates(wdc, medians, p1918, cfg, city_id=city, cause=Cause(cause))
            outcome = mortality_outcomes(curves, cfg)
        except EpiflowError as exc:
            raise _wrap("reconstruct", exc, city=city, row=_first_line(deaths)) from exc
        return curves, outcome, n_imp

    def _stage_reconstruct(self) -> list[str]:
        if not all(self.m.path(k) for k in INPUTS["reconstruct"]):
            return self._skip("reconstruct", "weekly_deaths, monthly_baseline and population are all required")
        deaths = load_weekly_deaths(self.m.path("weekly_deaths"))
        base = load_monthly_baseline(self.m.path("monthly_baseline"))
        pop = load_population(self.m.path("population"))
        for df, name in ((deaths, "weekly_deaths"), (base, "monthly_baseline")):
            bad = df[~df["cause"].isin([c.value for c in Cause])]
            if len(bad):
                raise _wrap("reconstruct", ValidationError(f"{name}: unknown cause {bad['cause'].iloc[0]!r}"),
                            city=bad["city_id"].iloc[0], row=int(bad["line"].iloc[0]))
        pops = {r["city_id"]: r for r in pop.to_dict("records")}
        jobs = []
        for (city, cause), g in deaths.groupby(["city_id", "cause"], sort=True):
            b = base[(base["city_id"] == city) & (base["cause"] == cause)]
            jobs.append((city, cause, g, b, pops.get(city)))
        with ThreadPoolExecutor(max_workers=self.workers) as ex:
            results = list(ex.map(lambda j: self._reconstruct_city(*j), jobs))

        rows, daily, weekly = [], [], []
        diag = {"n_imputed": {}, "n_negative_smoothed": {}, "excluded_no_acceleration": []}
        for curves, o, n_imp in results:
            tag = f"{o.city_id}/{o.cause.value}"
            rows.append([o.city_id, o.cause.value, curves.pop_1918, o.acceleration_date, o.peak_weekly_edr,
                         o.peak_date, o.cumulative_edr, int(o.second_peak_flag), n_imp, curves.n_negative_smoothed])
            diag["n_imputed"][tag] = n_imp
            diag["n_negative_smoothed"][tag] = curves.n_negative_smoothed
            if o.acceleration_date is None and o.cause.value == self.m.acceleration_cause:
                diag["excluded_no_acceleration"].append(o.city_id)
            daily.append(pd.DataFrame({"city_id": o.city_id, "cause": o.cause.value, "date": curves.grid.dates,
                                       "dbdr": curves.dbdr.values, "eddr": curves.eddr.values}))
            weekly.append(pd.DataFrame({"city_id": o.city_id, "cause": o.cause.value,
                                        "week_end_date": curves.wdc.labels, "deaths": curves.wdc.values,
                                        "wbdr": curves.wbdr.values, "ewdr": curves.ewdr.values}))
        if not rows:
            warnings.warn("reconstruct: no cities in weekly_deaths; outputs are empty")
        written: list[str] = []
        self._write(pd.DataFrame(rows, columns=MORTALITY_COLUMNS), "mortality_outcomes.csv", written)
        self._write(pd.concat(daily, ignore_index=True) if daily else
                    pd.DataFrame(columns=["city_id", "cause", "date", "dbdr", "eddr"]), "daily_curves.csv", written)
        self._write(pd.concat(weekly, ignore_index=True) if weekly else
                    pd.DataFrame(columns=["city_id", "cause", "week_end_date", "deaths", "wbdr", "ewdr"]),
                    "weekly_curves.csv", written)
        self._write_json(diag, "reconstruct.diagnostics.json", written)
        return written

    # -- measures ----------------------------------------------------------

    def _acceleration_dates(self) -> dict[str, dt.date | None]:
        p = self.out / "mortality_outcomes.csv"
        if not p.is_file():
            return {}
        mo = _read_csv(p)
        mo = mo[mo["cause"] == self.m.acceleration_cause]
        return {c: (None if pd.isna(a) else dt.date.fromisoformat(a))
                for c, a in zip(mo["city_id"], mo["acceleration_date"])}

    def _stage_measures(self) -> list[str]:
        if not self.m.path("npi_intervals"):
            return self._skip("measures", "no npi_intervals input")
        iv = load_npi_intervals(self.m.path("npi_intervals"))
        accel = self._acceleration_dates()
        records = {}
        window = (self.m.window_start, self.m.window_end)
        for city, g in iv.groupby("city_id", sort=True):
            cats: dict = {}
            for r in g.itertuples():
                try:
                    cat = parse_category(r.category)
                except ValidationError as exc:
                    raise _wrap("measures", exc, city=city, row=r.line) from exc
                cats.setdefault(cat, []).append((r.start_date, r.end_date))
            records[city] = NpiRecord(city, cats, window)
        if not records:
            warnings.warn("measures: no cities in npi_intervals; outputs are empty")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            measures, info = compute_measures(records, accel)
        for w in caught:
            log.warning("measures: %s", w.message)
        rows = []
        for mm in measures:
            first = records[mm.city_id].first_response_date
            rows.append([mm.city_id, mm.intensity, mm.speed, None if mm.high_npi is None else int(mm.high_npi),
                         info["intensity_exclusive"][mm.city_id], first, accel.get(mm.city_id)])
        written: list[str] = []
        npi = pd.DataFrame(rows, columns=NPI_COLUMNS).astype({"speed": "Int64", "high_npi": "Int64"})
        self._write(npi, "npi_measures.csv", written)
        info = dict(info, window=[str(d) for d in window], intensity_convention="inclusive day counts",
                    no_mortality_data=sorted(c for c in records if c not in accel))

        flags = {m.city_id: m.high_npi for m in measures if m.high_npi is not None}
        series = {}
        p = self.out / "daily_curves.csv"
        if p.is_file():
            dc = _read_csv(p)
            dc = dc[dc["cause"] == self.m.acceleration_cause]
            for city, g in dc.groupby("city_id", sort=True):
                dates = [dt.date.fromisoformat(d) for d in g["date"]]
                grid = CalendarGrid(dates[0], len(dates))
                series[city] = TimeSeries(grid, Frequency.DAILY, g["eddr"].to_numpy(float), "rate")
        curves, excluded = align_and_average(series, accel, flags, horizon_weeks=self.m.horizon_weeks)
        info["group_curve_excluded"] = excluded
        self._write_json(info, "npi_measures.provenance.json", written)
        self._write(curves, "group_curves.csv", written)
        return written

    # -- classify ----------------------------------------------------------

    def _stage_classify(self) -> list[str]:
        if not self.m.path("trade_snippets"):
            return self._skip("classify", "no trade_snippets input")
        sn = load_trade_snippets(self.m.path("trade_snippets"))
        try:
            monthly, rep = monthly_aggregate(sn, self.m.min_trade_observations)
        except ValidationError as exc:
            bad = sn[~sn["sector"].isin(["wholesale", "retail", "manufacturing"])]
            raise _wrap("classify", exc, city=bad["city_id"].iloc[0] if len(bad) else None,
                        row=_first_line(bad)) from exc
        if sn.empty:
            warnings.warn("classify: no trade snippets; outputs are empty")
        written: list[str] = []
        self._write(combined_index(monthly), "trade_monthly.csv", written)
        self._write_json({"trade_unclassified": rep.n_unclassified, "trade_strike_excluded": rep.n_strike_excluded,
                          "trade_excluded_cities": rep.excluded_cities}, "classify.diagnostics.json", written)
        return written

    # -- instrument --------------------------------------------------------

    def _stage_instrument(self) -> list[str]:
        if not (self.m.path("camps") and self.m.path("locations")):
            return self._skip("instrument", "camps and locations are both required")
        camps = load_camps(self.m.path("camps"))
        locs = load_locations(self.m.path("locations"))
        records = []
        for cid, g in camps.groupby("camp_id", sort=True):
            records.append(CampRecord(cid, float(g["lat"].iloc[0]), float(g["lon"].iloc[0]),
                                      dict(zip(g["month"], g["strength"]))))
        where = {r.location_id: (r.lat, r.lon) for r in locs.itertuples()}
        rows = []
        if where:
            try:
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always")
                    vals = instrument_table(where, records, self.m.strength_window)
            except ValidationError as exc:
                raise _wrap("instrument", exc) from exc
            for w in {str(w.message) for w in caught}:
                log.warning("instrument: %s", w)
            rows = [[v.location_id, v.z, v.n_camps, v.unit] for v in vals]
        else:
            warnings.warn("instrument: no locations; outputs are empty")
        written: list[str] = []
        self._write(pd.DataFrame(rows, columns=INSTRUMENT_COLUMNS), "instrument.csv", written)
        return written

    # -- regress -----------------------------------------------------------

    def city_table(self) -> pd.DataFrame:
        """One row per city: mortality outcomes, NPI measures, instrument and covariates."""
        frames = []
        p = self.out / "mortality_outcomes.csv"
        if p.is_file():
            mo = _read_csv(p)
            for cause, g in mo.groupby("cause"):
                g = g.set_index("city_id")[["peak_weekly_edr", "cumulative_edr", "second_peak_flag"]]
                g.columns = ["peak_edr", "cumulative_edr", "second_peak_flag"]
                if cause == self.m.acceleration_cause:
                    frames.append(g)
                frames.append(g.add_suffix(f"_{cause}"))
        p = self.out / "npi_measures.csv"
        if p.is_file():
            npi = _read_csv(p).set_index("city_id")[["intensity", "speed", "high_npi"]]
            frames.append(npi.rename(columns={"intensity": "npi_intensity", "speed": "npi_speed"}))
        p = self.out / "instrument.csv"
        if p.is_file():
            frames.append(_read_csv(p).set_index("location_id")[["z"]].rename_axis("city_id"))
        if self.m.path("city_covariates"):
            cov = load_table(self.m.path("city_covariates")).drop(columns="line").set_index("city_id")
            frames.append(cov)
        if not frames:
            return pd.DataFrame(columns=["city_id"])
        out = pd.concat(frames, axis=1, join="outer").sort_index()
        out.index.name = "city_id"
        return out.reset_index()

    def dataset(self, name: str) -> pd.DataFrame:
        cities = self.city_table()
        if name == "mortality":
            return cities
        if name == "trade":
            p = self.out / "trade_monthly.csv"
            if not p.is_file():
                raise ValidationError("trade data requested but the classify stage produced no output")
            tm = _read_csv(p)
            lo, hi = self.m.did_window
            tm = tm[(tm["month"] >= lo) & (tm["month"] <= hi)]
            return tm.merge(cities, on="city_id", how="left")
        if name == "panel":
            if not self.m.path("panel"):
                raise ValidationError("panel data requested but the manifest has no panel file")
            panel = load_table(self.m.path("panel")).drop(columns="line")
            return panel.merge(cities, on="city_id", how="left", suffixes=("", "_city"))
        raise ValidationError(f"unknown dataset {name!r}")

    def spec_for(self, r: dict) -> RegressionSpec:
        data = r["data"]
        post = r.get("post_from")
        if post is True:
            post = self.m.post_from
        base = r.get("base_period")
        if base is True:
            base = self.m.base_year
        panel_kind = post is not None or base is not None
        fe = r.get("fe") or ()
        if isinstance(fe, str):
            fe = [f.strip() for f in fe.split(",")]
        return RegressionSpec(
            outcome=r["outcome"],
            treatment=r["treatment"],
            controls=self.m.controls(r.get("controls")),
            unit="city_id",
            time=r.get("time") or ("month" if data == "trade" else "year"),
            fe=tuple(fe),
            cluster=r.get("cluster"),
            cov=r.get("cov") or (self.m.cov_panel if panel_kind else self.m.cov_cross_section),
            post_from=post,
            base_period=base,
            instrument=r.get("instrument"),
            weights=r.get("weights"),
            sample=r.get("sample"),
        )

    def fit_model(self, r: dict, data: pd.DataFrame | None = None):
        """Estimate one regression entry; returns (tidy rows, metadata)."""
        spec = self.spec_for(r)
        df = self.dataset(r["data"]) if data is None else data
        level = float(r.get("level", 0.95))
        try:
            fitted = estimate(df, spec)
            path = None
            if spec.kind == "event_study":
                path = fitted.path(level)
                fitted = fitted.result
            oster = None
            if r.get("oster"):
                if spec.kind != "cross_section" or spec.instrument:
                    raise ValidationError("the Oster bound is defined for OLS cross-sections only")
                oster = asdict(oster_for(df, spec))
        except EpiflowError as exc:
            raise type(exc)(f"model {r['name']}: {exc}") from exc
        tidy = fitted.tidy(level)
        tidy.insert(0, "model", r["name"])
        used = df.query(spec.sample) if spec.sample else df
        cols = [spec.outcome, spec.treatment, *spec.controls] + ([spec.instrument] if spec.instrument else [])
        used = used.dropna(subset=cols)
        meta = {
            "table": r.get("table", "Regressions"),
            "data": r["data"],
            "kind": spec.kind,
            "outcome": spec.outcome,
            "treatment": spec.treatment,
            "controls": list(spec.controls),
            "instrument": spec.instrument,
            "fe": list(spec.fe) or ([spec.unit, spec.time] if spec.kind != "cross_section" else []),
            "cov_type": fitted.cov_type,
            "level": level,
            "nobs": fitted.nobs,
            "n_clusters": fitted.n_clusters,
            "df_resid": fitted.df_resid,
            "df_absorbed": fitted.df_absorbed,
            "r2": fitted.r2,
            "adj_r2": fitted.adj_r2,
            "dropped": list(fitted.dropped),
            "first_stage_F": fitted.first_stage_F,
            "oster": oster,
            "outcome_mean": float(used[spec.outcome].mean()) if len(used) else None,
            "cities": sorted(map(str, used["city_id"].unique())) if "city_id" in used else [],
            "post_from": spec.post_from,
            "base_period": spec.base_period,
        }
        if path is not None:
            meta["event_path"] = path.to_dict("records")
        return tidy, meta

    def _stage_regress(self) -> list[str]:
        if not self.m.regressions:
            return self._skip("regress", "no regressions configured")
        tidies, metas = [], {}
        for r in self.m.regressions:
            try:
                tidy, meta = self.fit_model(r)
            except EpiflowError as exc:
                raise _wrap("regress", exc) from exc
            tidies.append(tidy)
            metas[r["name"]] = meta
        written: list[str] = []
        self._write(pd.concat(tidies, ignore_index=True)[RESULT_COLUMNS], "results.csv", written)
        self._write_json(metas, "results.meta.json", written)
        return written

    # -- report ------------------------------------------------------------

    def _load(self, name: str, columns: list[str]) -> pd.DataFrame:
        p = self.out / name
        return _read_csv(p) if p.is_file() else pd.DataFrame(columns=columns)

    def _load_json(self, name: str) -> dict:
        p = self.out / name
        return json.loads(p.read_text()) if p.is_file() else {}

    def bundle(self) -> ReportBundle:
        diag = {}
        diag.update(self._load_json("reconstruct.diagnostics.json"))
        diag.update(self._load_json("classify.diagnostics.json"))
        info = self._load_json("npi_measures.provenance.json")
        diag["excluded_no_speed"] = info.get("excluded_no_speed", [])
        diag["group_curve_excluded"] = info.get("group_curve_excluded", [])
        npi = self._load("npi_measures.csv", NPI_COLUMNS)
        trade = self._load("trade_monthly.csv", ["city_id", "month", "combined"])
        if len(trade) and len(npi):
            flags = {c: bool(h) for c, h in zip(npi["city_id"], npi["high_npi"]) if not pd.isna(h)}
            start = self.m.window_start.strftime("%Y-%m")
            end = self.m.window_end.strftime("%Y-%m")
            diag["trade_group_change"] = dict(group_change(trade, flags, start, end), start=start, end=end)
        return ReportBundle(
            mortality=self._load("mortality_outcomes.csv", MORTALITY_COLUMNS),
            npi=npi,
            npi_info=info,
            trade=trade,
            instrument=self._load("instrument.csv", INSTRUMENT_COLUMNS),
            results=self._load("results.csv", RESULT_COLUMNS),
            results_meta=self._load_json("results.meta.json"),
            group_curves=self._load("group_curves.csv", ["group", "day", "weeks_since_acceleration",
                                                         "mean_eddr", "n_cities"]),
            diagnostics=diag,
            acceleration_cause=self.m.acceleration_cause,
        )

    def _stage_report(self) -> list[str]:
        b = self.bundle()
        paths = emit_report(b, self.out, "both")
        written = [p.name for p in paths]
        self._write_json(b.diagnostics, "diagnostics.json", written)
        return written


def run_pipeline(manifest: Manifest, target: str = "report", use_cache: bool = True) -> ReportBundle:
    return Pipeline(manifest, use_cache=use_cache).run(target)


# -- lineage -----------------------------------------------------------------


def explain(manifest: Manifest, cell: str) -> str:
    """Trace one output cell back to the input rows it was computed from.

    ``cell`` is ``table:key:column`` where the key identifies the row:
    ``mortality_outcomes:<city>/<cause>``, ``npi_measures:<city>``,
    ``trade_monthly:<city>/<YYYY-MM>``, ``instrument:<location>``,
    ``results:<model>/<term>`` or ``group_curves:<group>/<day>``.
    """
    try:
        table, key, column = cell.split(":", 2)
    except ValueError:
        raise ValidationError("cell must look like table:key:column") from None
    table = table.removesuffix(".csv")
    out = manifest.out
    target = out / f"{table}.csv"
    if not target.is_file():
        raise ValidationError(f"{target} does not exist; run the pipeline first")
    df = _read_csv(target)
    if column not in df.columns:
        raise ValidationError(f"{table} has no column {column!r}")
    prov_path = out / "provenance.json"
    prov = json.loads(prov_path.read_text()) if prov_path.is_file() else {}
    lines = []

    def sources(name, rows, what):
        path = manifest.path(name)
        if path is None:
            return
        lines.append(f"  {getattr(manifest, name)} (sha256 {file_hash(path)[:12]}): {what}, "
                     f"{len(rows)} row(s), lines {_ranges(list(rows['line']))}")

    def mortality_sources(city, cause):
        sources("weekly_deaths", _rows("weekly_deaths", city_id=city, cause=cause), f"{city} {cause} weekly deaths")
        sources("monthly_baseline", _rows("monthly_baseline", city_id=city, cause=cause), "baseline rates")
        sources("population", _rows("population", city_id=city), "census populations")

    def _rows(name, **eq):
        loaders = {"weekly_deaths": load_weekly_deaths, "monthly_baseline": load_monthly_baseline,
                   "population": load_population, "npi_intervals": load_npi_intervals,
                   "trade_snippets": load_trade_snippets, "camps": load_camps, "locations": load_locations}
        data = loaders[name](manifest.path(name))
        for k, v in eq.items():
            data = data[data[k].astype(str) == str(v)]
        return data

    if table == "mortality_outcomes":
        city, cause = key.split("/")
        row = df[(df["city_id"] == city) & (df["cause"] == cause)]
        stage = "reconstruct"
    elif table == "npi_measures":
        city = key
        row = df[df["city_id"] == city]
        stage = "measures"
    elif table == "trade_monthly":
        city, month = key.split("/")
        row = df[(df["city_id"] == city) & (df["month"] == month)]
        stage = "classify"
    elif table == "instrument":
        row = df[df["location_id"] == key]
        stage = "instrument"
    elif table == "results":
        model, term = key.split("/", 1)
        row = df[(df["model"] == model) & (df["term"] == term)]
        stage = "regress"
    elif table == "group_curves":
        group, day = key.split("/")
        row = df[(df["group"] == group) & (df["day"] == int(day))]
        stage = "measures"
    else:
        raise ValidationError(f"no lineage rules for table {table!r}")
    if row.empty:
        raise ValidationError(f"{table} has no row {key!r}")
    lines.append(f"{table}[{key}].{column} = {row[column].iloc[0]}")
    entry = prov.get(stage, {})
    lines.append(f"produced by stage {stage} (cache key {entry.get('key', '?')[:12]})")
    lines.append("inputs:")
    if table == "mortality_outcomes":
        mortality_sources(city, cause)
    elif table == "npi_measures":
        sources("npi_intervals", _rows("npi_intervals", city_id=city), f"{city} NPI intervals")
        if column in ("speed", "high_npi"):
            mortality_sources(city, manifest.acceleration_cause)
        if column == "high_npi":
            lines.append("  high_npi also depends on the sample medians over: "
                         + ", ".join(df.dropna(subset=["high_npi"])["city_id"]))
    elif table == "trade_monthly":
        sn = _rows("trade_snippets", city_id=city)
        sn = sn[[d.strftime("%Y-%m") == month for d in sn["week_end_date"]]]
        sources("trade_snippets", sn, f"{city} {month} trade reports")
    elif table == "instrument":
        sources("locations", _rows("locations", location_id=key), "location")
        sources("camps", _rows("camps"), "camp strengths and coordinates")
    elif table == "results":
        meta = json.loads((out / "results.meta.json").read_text())[model]
        lines.append(f"  dataset {meta['data']}: {meta['nobs']} observations from {len(meta['cities'])} cities "
                     f"({', '.join(meta['cities'])})")
        for name in ("weekly_deaths", "npi_intervals", "trade_snippets", "camps", "city_covariates", "panel"):
            p = manifest.path(name)
            if p is not None:
                lines.append(f"  {getattr(manifest, name)} (sha256 {file_hash(p)[:12]})")
    elif table == "group_curves":
        npi = _read_csv(out / "npi_measures.csv").dropna(subset=["high_npi"])
        members = npi[npi["high_npi"].astype(bool) == (group == "high")]["city_id"]
        lines.append(f"  mean over {group}-NPI cities: {', '.join(members)}")
        for c in members:
            mortality_sources(c, manifest.acceleration_cause)
    return "\n".join(lines)


def _ranges(nums: list[int]) -> str:
    nums = sorted(set(int(n) for n in nums))
    if not nums:
        return "none"
    out = []
    start = prev = nums[0]
    for n in nums[1:]:
        if n != prev + 1:
            out.append(f"{start}-{prev}" if start != prev else str(start))
            start = n
        prev = n
    out.append(f"{start}-{prev}" if start != prev else str(start))
    return ",".join(out)
