"""Command line entry point: ``gridtune run | compare | validate``.

Exit codes: 0 on success, 1 when the input fails validation, 2 on any
other runtime error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import load_config
from .errors import GridTuneError, ParseError, UnknownScenarioError, ValidationError
from .reporting import audit_table, compare_runs
from .runner import load_runs, run_scenario
from .scenarios import SCENARIOS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridtune", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a built-in scenario or a spec file")
    run.add_argument("target", help=f"one of {', '.join(SCENARIOS)} or a path to a YAML spec")
    run.add_argument("--seed", type=int, default=42)
    run.add_argument("--t-end", type=float, default=None, help="override the configured end time")
    run.add_argument("--out", default=None, help="output directory (default runs/<name>)")
    run.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    run.add_argument("--workers", type=int, default=1, help="run independent simulations in parallel")

    cmp_ = sub.add_parser("compare", help="compare completion times across exported runs")
    cmp_.add_argument("runs", nargs="+", help="run directories (the first is the baseline)")
    cmp_.add_argument("--job", required=True)
    cmp_.add_argument("--out", default=None, help="write the table as CSV here")

    val = sub.add_parser("validate", help="check a spec file without running it")
    val.add_argument("spec")
    return parser


def _cmd_run(args) -> int:
    report = run_scenario(args.target, seed=args.seed, out_dir=args.out, t_end=args.t_end,
                          figures=not args.no_figures, workers=args.workers)
    for label, art in report.runs.items():
        s = art.summary
        print(f"[{label}] tuning={s['tuning_actions']} migrations={s['migrations']} -> {art.out_dir}")
        for jid, info in s["jobs"].items():
            print(f"    {jid}: {info['status']} completion={info['completion']}")
    if report.tables:
        print()
        print(report.render())
    if len(report.runs) == 1:
        art = next(iter(report.runs.values()))
        import json
        print()
        print(audit_table(json.loads(art.audit.read_text(encoding="utf-8"))))
    return 0


def _cmd_compare(args) -> int:
    table = compare_runs(load_runs(args.runs), args.job)
    print(table.render())
    if args.out:
        Path(args.out).write_text(table.to_csv(), encoding="utf-8")
    return 0


def _cmd_validate(args) -> int:
    spec = load_config(args.spec)
    jobs = len(spec.jobs)
    nodes = sum(len(r.nodes) for s in spec.topology.sites for r in s.resources)
    print(f"{args.spec}: ok ({len(spec.topology.sites)} sites, {nodes} nodes, {jobs} jobs)")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "compare": _cmd_compare, "validate": _cmd_validate}[args.command]
    try:
        return handler(args)
    except (ParseError, ValidationError, UnknownScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (GridTuneError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
