"""Command-line entry point: ``retinaprobe {run,validate,list-presets,oracle}``."""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import yaml

from .scenario import (
    ORACLE_COLUMNS,
    ScenarioError,
    list_presets,
    load_scenario,
    preset,
    resolve,
    run,
    run_oracle,
    validate,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ALL_FAILED = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="retinaprobe", description=__doc__)
    sub = p.add_subparsers(dest="verb", required=True)

    def scenario_args(sp):
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--scenario", type=Path, help="YAML scenario file")
        src.add_argument("--preset", help="name of a built-in preset")

    r = sub.add_parser("run", help="evaluate a scenario sweep")
    scenario_args(r)
    r.add_argument("--out", type=Path, help="output file (default: stdout)")
    r.add_argument("--format", choices=("csv", "json"), help="overrides output.format")
    r.add_argument("--seed", type=int, default=0, help="recorded in the header (the grid engine is deterministic)")
    r.add_argument("--jobs", type=int, default=1)

    v = sub.add_parser("validate", help="check a scenario without running it")
    scenario_args(v)

    sub.add_parser("list-presets", help="list built-in presets and the figure each reproduces")

    o = sub.add_parser("oracle", help="Monte-Carlo cross-check of a scenario")
    scenario_args(o)
    o.add_argument("--out", type=Path)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--samples", type=int, default=10**7)
    o.add_argument("--points", type=int, default=3, help="number of sweep points checked")
    return p


def _raw(args) -> dict:
    if args.preset is not None:
        return preset(args.preset)
    return load_scenario(args.scenario)


def _emit(text: str, out: Path | None):
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.verb == "list-presets":
        for name, fig, desc in list_presets():
            print(f"{name:12s} {fig:10s} {desc}")
        return EXIT_OK

    try:
        raw = _raw(args)
        if args.verb == "validate":
            errors = validate(raw)
            for e in errors:
                print(f"error: {e}", file=sys.stderr)
            if errors:
                return EXIT_CONFIG
            print("ok")
            return EXIT_OK
        scenario = resolve(raw)
    except (ScenarioError, OSError, yaml.YAMLError) as exc:
        for e in getattr(exc, "errors", [str(exc)]):
            print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    if args.verb == "run":
        table = run(scenario, jobs=args.jobs)
        table.extra_header["seed"] = args.seed
        fmt = args.format or scenario.config["output"]["format"]
        out = args.out or (Path(p) if (p := scenario.config["output"]["path"]) else None)
        _emit(table.to_json() if fmt == "json" else table.to_csv(), out)
        if table.rows and all(r.status != "ok" for r in table.rows):
            return EXIT_ALL_FAILED
        return EXIT_OK

    rows = run_oracle(scenario, seed=args.seed, count=args.samples, n_points=args.points)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=ORACLE_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    _emit(buf.getvalue(), args.out)
    return EXIT_OK if all(r["ok"] for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
