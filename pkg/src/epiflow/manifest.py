"""Run configuration: a flat YAML mapping of input paths and parameters.

Paths are resolved relative to the manifest file. Unknown keys are rejected
so a typo never silently falls back to a default. The one nested key,
``regressions``, lists model specifications for the regress stage.
"""
from __future__ import annotations

import dataclasses
import datetime as dt
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .errors import ValidationError
from .io import INPUT_SCHEMAS
from .mortality import STUDY_END, STUDY_START, Cause, MortalityConfig
from .series import SmoothingParams

BASELINE_CONTROLS = ("log_pop_1900", "log_pop_1910", "mfg_emp_1914_per_pop_1910", "density_1910",
                     "health_spending_pc_1917")

INPUT_KEYS = tuple(INPUT_SCHEMAS)
EXTRA_INPUT_KEYS = ("city_covariates", "panel")

REGRESSION_KEYS = {
    "name", "table", "data", "outcome", "treatment", "controls", "fe", "cluster", "cov",
    "post_from", "base_period", "instrument", "oster", "sample", "weights", "level", "time",
}


def _as_date(v, key) -> dt.date:
    if isinstance(v, dt.date):
        return v
    try:
        return dt.date.fromisoformat(str(v))
    except ValueError:
        raise ValidationError(f"manifest key {key}: not an ISO date: {v!r}") from None


def _as_month(v, key) -> str:
    s = v.strftime("%Y-%m") if isinstance(v, dt.date) else str(v)
    try:
        dt.date.fromisoformat(s + "-01")
    except ValueError:
        raise ValidationError(f"manifest key {key}: not a YYYY-MM month: {v!r}") from None
    return s


@dataclass
class Manifest:
    root: Path = Path(".")
    output_dir: str = "out"
    weekly_deaths: str | None = None
    monthly_baseline: str | None = None
    population: str | None = None
    npi_intervals: str | None = None
    trade_snippets: str | None = None
    camps: str | None = None
    locations: str | None = None
    city_covariates: str | None = None
    panel: str | None = None

    scale: float = 100_000.0
    window_start: dt.date = STUDY_START
    window_end: dt.date = STUDY_END
    weekly_bandwidth: int = 3
    monthly_bandwidth: int = 15
    baseline_years: tuple[int, int] = (1910, 1916)
    baseline_basis: str = "weekly"
    max_impute_gap: int = 2
    acceleration_cause: str = Cause.INFLUENZA_PNEUMONIA.value
    horizon_weeks: int = 19
    did_window: tuple[str, str] = ("1918-01", "1919-03")
    post_from: str = "1918-08"
    base_year: int = 1914
    min_trade_observations: int = 9
    strength_window: tuple[dt.date, dt.date] = (dt.date(1918, 7, 1), dt.date(1918, 9, 30))
    cov_cross_section: str = "hc1"
    cov_panel: str = "cluster"
    baseline_controls: tuple[str, ...] = BASELINE_CONTROLS
    extended_controls: tuple[str, ...] = ()
    regressions: tuple[dict, ...] = ()

    def __post_init__(self):
        self.root = Path(self.root)
        self.window_start = _as_date(self.window_start, "window_start")
        self.window_end = _as_date(self.window_end, "window_end")
        days = (self.window_end - self.window_start).days + 1
        if days <= 0 or days % 7:
            raise ValidationError(
                f"study window {self.window_start}..{self.window_end} is {days} days; must be whole weeks"
            )
        self.strength_window = tuple(_as_date(v, "strength_window") for v in self.strength_window)
        self.did_window = tuple(_as_month(v, "did_window") for v in self.did_window)
        self.post_from = _as_month(self.post_from, "post_from")
        self.baseline_years = tuple(int(y) for y in self.baseline_years)
        self.baseline_controls = tuple(self.baseline_controls)
        self.extended_controls = tuple(self.extended_controls)
        Cause(self.acceleration_cause)
        for key in ("weekly_bandwidth", "monthly_bandwidth", "min_trade_observations", "horizon_weeks"):
            if int(getattr(self, key)) < 1:
                raise ValidationError(f"manifest key {key} must be a positive integer")
        for key in ("cov_cross_section", "cov_panel"):
            if getattr(self, key) not in ("classical", "hc0", "hc1", "hc2", "hc3", "cluster"):
                raise ValidationError(f"manifest key {key}: unknown covariance flavour {getattr(self, key)!r}")
        regs = []
        names = set()
        for i, r in enumerate(self.regressions or ()):
            if not isinstance(r, dict):
                raise ValidationError(f"regressions[{i}] must be a mapping")
            bad = set(r) - REGRESSION_KEYS
            if bad:
                raise ValidationError(f"regressions[{i}]: unknown key(s) {sorted(bad)}")
            for need in ("name", "data", "outcome", "treatment"):
                if need not in r:
                    raise ValidationError(f"regressions[{i}]: missing {need}")
            if r["data"] not in ("mortality", "trade", "panel"):
                raise ValidationError(f"regressions[{i}]: data must be mortality, trade or panel")
            if r["name"] in names:
                raise ValidationError(f"regressions: duplicate name {r['name']!r}")
            names.add(r["name"])
            regs.append(dict(r))
        self.regressions = tuple(regs)

    @property
    def n_weeks(self) -> int:
        return ((self.window_end - self.window_start).days + 1) // 7

    def path(self, key: str) -> Path | None:
        v = getattr(self, key)
        return None if v is None else (self.root / v)

    @property
    def out(self) -> Path:
        return self.root / self.output_dir

    def mortality_config(self) -> MortalityConfig:
        return MortalityConfig(
            scale=float(self.scale),
            weekly=SmoothingParams.weekly(int(self.weekly_bandwidth)),
            monthly=SmoothingParams.monthly(int(self.monthly_bandwidth)),
            window_start=self.window_start,
            n_weeks=self.n_weeks,
            baseline_basis=self.baseline_basis,
            max_impute_gap=int(self.max_impute_gap),
        )

    def controls(self, value) -> tuple[str, ...]:
        """Resolve ``baseline``/``extended``/``none`` or an explicit list."""
        if value in (None, "none", ()):
            return ()
        if value == "baseline":
            return self.baseline_controls
        if value == "extended":
            return self.baseline_controls + self.extended_controls
        if isinstance(value, str):
            return tuple(v.strip() for v in value.split(",") if v.strip())
        return tuple(value)

    def fingerprint(self) -> dict[str, Any]:
        """Parameters that affect results (paths excluded), for cache keys."""
        out = {}
        for f in dataclasses.fields(self):
            if f.name in ("root", "output_dir", *INPUT_KEYS, *EXTRA_INPUT_KEYS):
                continue
            out[f.name] = getattr(self, f.name)
        return out


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"manifest {path} not found")
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ValidationError(f"manifest {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ValidationError(f"manifest {path}: top level must be a mapping")
    known = {f.name for f in dataclasses.fields(Manifest)} - {"root"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValidationError(f"manifest {path}: unknown key(s) {unknown}")
    m = Manifest(root=path.parent, **data)
    for key in (*INPUT_KEYS, *EXTRA_INPUT_KEYS):
        p = m.path(key)
        if p is not None and not p.is_file():
            raise ValidationError(f"manifest {path}: {key} file {p} does not exist")
    return m
