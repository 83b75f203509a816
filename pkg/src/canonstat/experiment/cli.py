"""``canonstat`` command line: simulate, limit, compare, norms, verify.

Exit codes: 0 success, 2 input error, 3 numeric error, 4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..errors import CanonStatError, InputError
from .battery import verify_report
from .config import load_config
from .runner import run_compare, run_limit, run_norms, run_simulate, write_json

EXIT_OK = 0
EXIT_VERIFY = 4


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="INI experiment configuration")
    common.add_argument("--seed", type=int, help="override the run seed (unsigned 64-bit)")
    common.add_argument("--out", help="override the output directory")
    common.add_argument("--reps", type=int, help="override the number of replications")
    common.add_argument("--threads", type=int, help="worker threads; output does not depend on it")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="canonstat", description="Canonical V-statistics of dependent samples.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="V_n replications -> simulate.csv")
    sub.add_parser("limit", parents=[common], help="limit-law replications -> limit_msi.csv")
    cmp_ = sub.add_parser("compare", parents=[common], help="KS comparison -> compare.json")
    cmp_.add_argument("--regenerate", action="store_true", help="rerun simulate and limit first")
    sub.add_parser("norms", parents=[common], help="print seminorm / combined-norm table")
    ver = sub.add_parser("verify", parents=[common], help="invariant battery -> verify.json")
    ver.add_argument("--skip-probe", action="store_true", help="omit the Monte Carlo moment probe")
    return p


def _load(args):
    cfg = load_config(args.config)
    return cfg.override(seed=args.seed, out=args.out, reps=args.reps, threads=args.threads)


def run(args) -> int:
    cfg = _load(args)
    if args.command == "simulate":
        print(run_simulate(cfg))
    elif args.command == "limit":
        for path in run_limit(cfg).values():
            print(path)
    elif args.command == "compare":
        report = run_compare(cfg, regenerate=args.regenerate)
        print(json.dumps(report, indent=2, sort_keys=True))
        return EXIT_OK if report["pass"] else EXIT_VERIFY
    elif args.command == "norms":
        sys.stdout.write(run_norms(cfg))
    elif args.command == "verify":
        report = verify_report(cfg, skip_probe=args.skip_probe)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "verify.json", report)
        for e in report["invariants"]:
            measured = "-" if e["measured"] is None else f"{e['measured']:.6g}"
            print(f"{e['verdict']:4s}  {e['name']:45s} {measured:>12s} {e['comparator']} {e['bound']:.3g}")
        return EXIT_OK if report["pass"] else EXIT_VERIFY
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return InputError.exit_code if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except CanonStatError as exc:
        print(f"canonstat: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
