"""Command-line entry point: ``epiflow <stage> --manifest path``.

Exit codes: 0 success, 2 invalid input, 3 a model could not be estimated.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import EpiflowError, EstimationError, StageError, ValidationError
from .io import load_table, write_csv, write_json
from .manifest import Manifest, load_manifest
from .pipeline import RESULT_COLUMNS, Pipeline, explain

ALIASES = {"city": "city_id"}


def _cols(text: str | None) -> list[str]:
    if not text:
        return []
    return [ALIASES.get(c.strip(), c.strip()) for c in text.split(",") if c.strip()]


def exit_code(exc: BaseException) -> int:
    cause = exc.cause if isinstance(exc, StageError) else exc
    if isinstance(cause, ValidationError):
        return 2
    if isinstance(cause, EstimationError):
        return 3
    return 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="epiflow", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = p.add_subparsers(dest="command", required=True)

    def stage(name, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--manifest", required=name != "regress", type=Path)
        s.add_argument("--no-cache", action="store_true", help="recompute even when inputs are unchanged")
        return s

    stage("reconstruct", "daily excess mortality curves and city outcomes")
    stage("measures", "NPI intensity, speed, High-NPI flags and aligned group curves")
    stage("classify", "trade-condition index by city and month")
    stage("instrument", "camp-exposure instrument by location")
    r = stage("regress", "run the manifest regressions, or one model given by flags")
    r.add_argument("--data", help="mortality, trade, panel, or a CSV path")
    r.add_argument("--outcome")
    r.add_argument("--treatment")
    r.add_argument("--controls", help="comma list, or baseline/extended")
    r.add_argument("--fe", help="comma list of fixed-effect columns, e.g. city,year")
    r.add_argument("--cluster")
    r.add_argument("--time", help="time column for panels (default month for trade, else year)")
    r.add_argument("--post-from")
    r.add_argument("--base-year")
    r.add_argument("--cov", choices=["classical", "hc0", "hc1", "hc2", "hc3", "cluster"])
    r.add_argument("--oster", action="store_true")
    r.add_argument("--iv", help="instrument column for the treatment")
    r.add_argument("--level", type=float, default=0.95, help="confidence level")
    r.add_argument("--name", default="cli")
    r.add_argument("--output", type=Path, help="directory for results.csv and results.meta.json")
    rep = stage("report", "all stages plus report.csv / report.md")
    rep.add_argument("--explain", metavar="CELL", help="print the lineage of one output cell")
    e = stage("explain", "print the lineage of one output cell")
    e.add_argument("--cell", "--explain", dest="cell", required=True, metavar="TABLE:KEY:COLUMN")
    return p


def _base_year(v):
    if v is None:
        return None
    try:
        return int(v)
    except ValueError:
        return v


def _adhoc_regress(args, manifest: Manifest | None) -> Path:
    if not (args.outcome and args.treatment):
        raise ValidationError("--outcome and --treatment are required for a single model")
    data_arg = args.data or "mortality"
    entry = {
        "name": args.name,
        "data": data_arg if data_arg in ("mortality", "trade", "panel") else "panel",
        "outcome": args.outcome,
        "treatment": args.treatment,
        "controls": args.controls,
        "fe": _cols(args.fe),
        "cluster": ALIASES.get(args.cluster, args.cluster),
        "cov": args.cov,
        "post_from": args.post_from,
        "base_period": _base_year(args.base_year),
        "instrument": args.iv,
        "oster": args.oster,
        "level": args.level,
    }
    if args.time:
        entry["time"] = args.time
    if manifest is None:
        manifest = Manifest(root=Path.cwd())
    pipe = Pipeline(manifest, use_cache=not args.no_cache)
    data = None
    if data_arg in ("mortality", "trade", "panel"):
        if args.manifest is None:
            raise ValidationError("--manifest is required unless --data is a CSV path")
        for s in ("reconstruct", "measures", "classify", "instrument"):
            pipe.run(s)
    else:
        data = load_table(Path(data_arg)).rename(columns=ALIASES)
    tidy, meta = pipe.fit_model(entry, data)
    out = args.output or (manifest.out / "regress_cli")
    write_csv(tidy[RESULT_COLUMNS], out / "results.csv")
    write_json({args.name: meta}, out / "results.meta.json")
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        manifest = load_manifest(args.manifest) if args.manifest else None
        if args.command == "explain":
            print(explain(manifest, args.cell))
        elif args.command == "regress" and (args.outcome or args.treatment):
            out = _adhoc_regress(args, manifest)
            print(f"wrote {out / 'results.csv'}")
        else:
            pipe = Pipeline(manifest, use_cache=not args.no_cache)
            pipe.run(args.command)
            hits = [s for s, hit in pipe.cache_hits.items() if hit]
            print(f"{args.command}: done ({len(pipe.cache_hits)} stage(s), {len(hits)} cached); "
                  f"outputs in {manifest.out}")
            if args.command == "report" and args.explain:
                print(explain(manifest, args.explain))
    except EpiflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
