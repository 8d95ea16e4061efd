"""Command line entry point: ``cmoforge run|compare|front|list-problems|replay-verify``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from cmoforge.core import FEAccounting
from cmoforge.experiment import (
    ExperimentConfig,
    ExperimentError,
    cmd_compare,
    cmd_front,
    cmd_run,
    list_problems,
    replay_verify,
)
from cmoforge.llm.backends import ConfigurationError, ReplayMiss

log = logging.getLogger("cmoforge")


def _run(args: argparse.Namespace) -> int:
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.out:
        config.out = args.out
    if args.seeds:
        config.runs = args.seeds
    if args.backend:
        config.backend = args.backend
    if args.fe_accounting:
        config.engine = {**config.engine, "fe_accounting": args.fe_accounting}
    dirs = cmd_run(config, jobs=args.jobs)
    for d in dirs:
        print(d)
    return 0


def _compare(args: argparse.Namespace) -> int:
    comparison = cmd_compare(args.runs, args.baseline, out=args.out)
    print("IGD")
    print(comparison.igd.text)
    print("HV")
    print(comparison.hv.text)
    if args.out:
        print(f"tables and ranks written to {args.out}")
    return 0


def _front(args: argparse.Namespace) -> int:
    result = cmd_front(args.run_dir)
    print(result["csv"])
    if result["svg"]:
        print(result["svg"])
    if result["notice"]:
        print(result["notice"], file=sys.stderr)
    return 0


def _list(args: argparse.Namespace) -> int:
    sys.stdout.write(list_problems(args.n))
    return 0


def _verify(args: argparse.Namespace) -> int:
    verdict = replay_verify(args.run_dir)
    for name, same in verdict.items():
        print(f"{name}: {'identical' if same else 'DIFFERS'}")
    return 0 if all(verdict.values()) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmoforge", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment")
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seeds", type=int, help="independent runs per problem/algorithm")
    p.add_argument("--backend", help="surrogate | oracle[:v1,...] | live | replay:PATH | record:PATH")
    p.add_argument("--jobs", type=int, help="parallel runs (default: CPU count)")
    p.add_argument("--fe-accounting", choices=[m.value for m in FEAccounting])
    p.set_defaults(func=_run)

    p = sub.add_parser("compare", help="Wilcoxon/Friedman comparison of run directories")
    p.add_argument("runs", nargs="+", help="run directories or experiment roots")
    p.add_argument("--baseline", required=True)
    p.add_argument("--out", help="directory for tables and ranks")
    p.set_defaults(func=_compare)

    p = sub.add_parser("front", help="final feasible front as CSV and SVG")
    p.add_argument("run_dir", type=Path)
    p.set_defaults(func=_front)

    p = sub.add_parser("list-problems", help="print the TRIC catalog")
    p.add_argument("--n", type=int, help="decision dimension (default 10)")
    p.set_defaults(func=_list)

    p = sub.add_parser("replay-verify", help="re-run a recorded run from its ledger and compare outputs")
    p.add_argument("run_dir", type=Path)
    p.set_defaults(func=_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, ExperimentError, ReplayMiss, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
