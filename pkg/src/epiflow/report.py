"""Report assembly: tables in CSV and markdown from one set of rounded cells.

All rounding happens in the ``fmt_*`` helpers. Rates carry one decimal,
coefficients and standard errors three significant figures; markdown puts
standard errors in parentheses under their coefficient.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ValidationError
from .io import write_csv


def _missing(x) -> bool:
    return x is None or (isinstance(x, float) and math.isnan(x)) or x is pd.NA or x is pd.NaT


def fmt_rate(x) -> str:
    if _missing(x):
        return ""
    s = f"{float(x):.1f}"
    return "0.0" if s == "-0.0" else s


def fmt_coef(x) -> str:
    """Three significant figures, never in exponent notation."""
    if _missing(x):
        return ""
    x = float(x)
    if not math.isfinite(x):
        return str(x)
    if x == 0:
        return "0"
    decimals = 2 - int(math.floor(math.log10(abs(x))))
    r = round(x, decimals)
    # Rounding can carry into the next power of ten (9.995 -> 10.0).
    if r != 0 and int(math.floor(math.log10(abs(r)))) != 2 - decimals:
        decimals -= 1
        r = round(x, decimals)
    s = f"{r:.{max(decimals, 0)}f}"
    return s[1:] if s.startswith("-") and float(s) == 0 else s


def fmt_int(x) -> str:
    return "" if _missing(x) else str(int(x))


def fmt_text(x) -> str:
    if _missing(x):
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "yes" if x else "no"
    return str(x)


@dataclass
class Table:
    name: str
    title: str
    columns: list[str]
    rows: list[tuple[str, list[str]]] = field(default_factory=list)
    se_rows: set[int] = field(default_factory=set)  # row indices holding standard errors
    note: str = ""

    def add(self, label: str, cells: list[str], se: bool = False):
        if len(cells) != len(self.columns):
            raise ValueError(f"{self.name}: row {label!r} has {len(cells)} cells for {len(self.columns)} columns")
        if se:
            self.se_rows.add(len(self.rows))
        self.rows.append((label, cells))


@dataclass
class ReportBundle:
    mortality: pd.DataFrame
    npi: pd.DataFrame
    npi_info: dict
    trade: pd.DataFrame
    instrument: pd.DataFrame
    results: pd.DataFrame
    results_meta: dict
    group_curves: pd.DataFrame
    diagnostics: dict
    acceleration_cause: str = "influenza_pneumonia"


def mortality_table(b: ReportBundle) -> Table:
    t = Table("mortality", "Mortality outcomes", ["acceleration_date", "peak_weekly_edr", "peak_date",
                                                   "cumulative_edr", "second_peak"])
    if b.mortality.empty:
        return t
    df = b.mortality[b.mortality["cause"] == b.acceleration_cause].sort_values("city_id")
    for r in df.itertuples():
        t.add(r.city_id, [fmt_text(r.acceleration_date), fmt_rate(r.peak_weekly_edr), fmt_text(r.peak_date),
                          fmt_rate(r.cumulative_edr), fmt_text(bool(r.second_peak_flag))])
    return t


def npi_table(b: ReportBundle) -> Table:
    t = Table("npi", "NPI measures", ["intensity", "speed", "high_npi"])
    if b.npi.empty:
        return t
    for r in b.npi.sort_values("city_id").itertuples():
        flag = "" if _missing(r.high_npi) else fmt_text(bool(r.high_npi))
        t.add(r.city_id, [fmt_int(r.intensity), fmt_int(r.speed), flag])
    classified = b.npi.dropna(subset=["high_npi"])
    for name, flag in (("mean high NPI", True), ("mean low NPI", False)):
        g = classified[classified["high_npi"].astype(bool) == flag]
        t.add(name, [fmt_rate(g["intensity"].mean() if len(g) else np.nan),
                     fmt_rate(g["speed"].mean() if len(g) else np.nan), fmt_int(len(g))])
    med = b.npi_info.get("medians", {})
    t.add("median", [fmt_rate(med.get("intensity")), fmt_rate(med.get("speed")), ""])
    return t


def trade_table(b: ReportBundle) -> Table:
    changes = b.diagnostics.get("trade_group_change", {})
    t = Table("trade", "Combined trade index change by group", ["start", "end", "change"])
    for group in ("high", "low"):
        c = changes.get(group)
        if c is not None:
            t.add(f"{group} NPI", [changes.get("start", ""), changes.get("end", ""), fmt_rate(c)])
    return t


def regression_tables(b: ReportBundle) -> list[Table]:
    """One table per ``table`` label; columns are models, rows are terms."""
    if b.results.empty:
        return []
    out = []
    by_table: dict[str, list[str]] = {}
    for model in dict.fromkeys(b.results["model"]):
        by_table.setdefault(b.results_meta[model].get("table", "Regressions"), []).append(model)
    for title, models in by_table.items():
        t = Table(f"regression:{title}", title, models)
        res = b.results[b.results["model"].isin(models)]
        for term in dict.fromkeys(res["term"]):
            est, se = [], []
            for m in models:
                row = res[(res["model"] == m) & (res["term"] == term)]
                est.append(fmt_coef(row["estimate"].iloc[0]) if len(row) else "")
                se.append(fmt_coef(row["se"].iloc[0]) if len(row) else "")
            t.add(term, est)
            t.add(f"{term} (se)", se, se=True)
        meta = [b.results_meta[m] for m in models]
        t.add("N", [fmt_int(m.get("nobs")) for m in meta])
        t.add("R2", [fmt_coef(m.get("r2")) for m in meta])
        t.add("clusters", [fmt_int(m.get("n_clusters")) for m in meta])
        t.add("outcome mean", [fmt_coef(m.get("outcome_mean")) for m in meta])
        if any(m.get("first_stage_F") is not None for m in meta):
            t.add("first-stage F", [fmt_coef(m.get("first_stage_F")) for m in meta])
        if any(m.get("oster") for m in meta):
            t.add("Oster beta*", [fmt_coef((m.get("oster") or {}).get("beta_star")) for m in meta])
        out.append(t)
    return out


def diagnostics_table(b: ReportBundle) -> Table:
    t = Table("diagnostics", "Diagnostics", ["value"])
    d = b.diagnostics
    for key in ("n_imputed", "n_negative_smoothed"):
        for city, v in sorted((d.get(key) or {}).items()):
            if v:
                t.add(f"{key} {city}", [fmt_int(v)])
    for key in ("excluded_no_acceleration", "excluded_no_speed", "trade_excluded_cities", "group_curve_excluded"):
        vals = d.get(key) or []
        t.add(key, [", ".join(sorted(map(str, vals)))])
    for key in ("trade_unclassified", "trade_strike_excluded"):
        if key in d:
            t.add(key, [fmt_int(d[key])])
    return t


def build_tables(b: ReportBundle) -> list[Table]:
    return [mortality_table(b), npi_table(b), trade_table(b), *regression_tables(b), diagnostics_table(b)]


def to_long_frame(tables: list[Table]) -> pd.DataFrame:
    rows = []
    for t in tables:
        for label, cells in t.rows:
            for col, v in zip(t.columns, cells):
                rows.append((t.name, label, col, v))
    return pd.DataFrame(rows, columns=["table", "row", "column", "value"])


def to_markdown(tables: list[Table]) -> str:
    lines = []
    for t in tables:
        lines.append(f"## {t.title}")
        lines.append("")
        if not t.rows:
            lines.append("(no rows)")
            lines.append("")
            continue
        lines.append("| | " + " | ".join(t.columns) + " |")
        lines.append("|---" * (len(t.columns) + 1) + "|")
        for i, (label, cells) in enumerate(t.rows):
            if i in t.se_rows:
                label = ""
                cells = [f"({c})" if c else "" for c in cells]
            lines.append(f"| {label} | " + " | ".join(cells) + " |")
        lines.append("")
        if t.note:
            lines.append(t.note)
            lines.append("")
    return "\n".join(lines)


def emit_report(bundle: ReportBundle, out_dir: str | Path, fmt: str = "both") -> list[Path]:
    """Write ``report.csv`` and/or ``report.md``; returns the written paths."""
    if fmt not in ("csv", "markdown", "both"):
        raise ValidationError(f"unknown report format {fmt!r}")
    out_dir = Path(out_dir)
    tables = build_tables(bundle)
    written = []
    if fmt in ("csv", "both"):
        p = out_dir / "report.csv"
        write_csv(to_long_frame(tables), p)
        written.append(p)
    if fmt in ("markdown", "both"):
        p = out_dir / "report.md"
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            p.write_text("# Report\n\n" + to_markdown(tables))
        except OSError as exc:
            raise ValidationError(f"cannot write {p}: {exc}") from exc
        written.append(p)
    return written
