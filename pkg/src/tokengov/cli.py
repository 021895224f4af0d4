"""Command line entry point: ``tokengov run|verify|list-scenarios``."""
from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from .errors import ParseError, ScenarioParseError, TokenGovError
from .harness import bundled_scenarios, load_scenario, replay_verify, run_scenario


def _run(args: argparse.Namespace) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        report = run_scenario(scenario, out_dir=args.out, seed=args.seed)
    except TokenGovError as exc:
        print(f"error: scenario aborted: {exc!r}", file=sys.stderr)
        return 2
    print(f"scenario  {report.scenario}")
    print(f"events    {report.ledger_length}")
    print(f"incidents {len(report.incidents)}")
    print(f"digest    {report.final_hash}")
    for exp in report.expectations:
        mark = "PASS" if exp["passed"] else "FAIL"
        print(f"  [{mark}] {exp['check']} {exp['where']} expected={exp['expected']!r} actual={exp['actual']!r}")
    if args.out:
        print(f"wrote {args.out}/ledger.ndjson, report.json, incidents.csv")
    return 0 if report.passed else 1


def _verify(args: argparse.Namespace) -> int:
    try:
        result = replay_verify(args.ledger)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    note = " (truncated input)" if result.truncated else ""
    if result.ok:
        print(f"ok: {result.length} events verified{note}; digest {result.final_hash}")
        return 0
    print(f"mismatch at seq {result.mismatch_seq} of {result.length}{note}")
    return 1


def _list(args: argparse.Namespace) -> int:
    for name in bundled_scenarios():
        desc = load_scenario(name).description.strip().splitlines()
        print(f"{name:28s} {desc[0] if desc else ''}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="tokengov", description="Deterministic tokenization governance simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file (or bundled scenario name)")
    p_run.add_argument("scenario")
    p_run.add_argument("--out", help="directory for ledger.ndjson, report.json, incidents.csv")
    p_run.add_argument("--seed", type=int, help="override the scenario seed")
    p_run.set_defaults(func=_run)

    p_verify = sub.add_parser("verify", help="recompute the hash chain of a ledger export")
    p_verify.add_argument("ledger")
    p_verify.set_defaults(func=_verify)

    p_list = sub.add_parser("list-scenarios", help="list bundled scenarios")
    p_list.set_defaults(func=_list)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
