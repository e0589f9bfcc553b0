"""Command-line entry point: `bevx-bench run` and `bevx-bench check`.

Exit codes: 0 success, 1 equivalence-check failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import sys

from ..errors import BevxError
from . import emit_csv, emit_json, run_bench, run_check


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bevx-bench",
        description="Benchmark and verify camera-to-BEV transform backends.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser(
        "run", help="time backends across settings and emit CSV/JSON"
    )
    run_p.add_argument("--config", required=True, help="scene config (JSON)")
    run_p.add_argument(
        "--settings",
        default="S1",
        help="comma-separated setting names (default: S1)",
    )
    run_p.add_argument(
        "--backends",
        default="matrixvt,ftm",
        help="comma-separated backends (default: matrixvt,ftm)",
    )
    run_p.add_argument("--repeats", type=int, default=20)
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--warmup", type=int, default=2)
    run_p.add_argument(
        "--out", default=None, help="CSV output path (default: stdout)"
    )
    run_p.add_argument(
        "--json", dest="json_out", default=None, help="also write JSON here"
    )
    run_p.add_argument(
        "--parallel",
        type=int,
        default=1,
        help="prepare settings with up to N threads (timing stays serial; "
        "capped by BEVX_THREADS)",
    )
    run_p.add_argument(
        "--cache", default=None, help="directory for ring/ray matrix caches"
    )

    check_p = sub.add_parser("check", help="run the equivalence suite")
    check_p.add_argument("--config", required=True, help="scene config (JSON)")
    check_p.add_argument("--trials", type=int, default=50)
    check_p.add_argument("--seed", type=int, default=7)
    check_p.add_argument("--channels", type=int, default=8)
    check_p.add_argument(
        "--flip-ring-bit",
        action="store_true",
        help="corrupt one ring entry first (the suite must then fail)",
    )
    return parser


def _split(raw):
    return [part for part in (p.strip() for p in raw.split(",")) if part]


def _cmd_run(args):
    records = run_bench(
        args.config,
        _split(args.settings),
        _split(args.backends),
        repeats=args.repeats,
        seed=args.seed,
        warmup=args.warmup,
        parallel=args.parallel,
        cache_dir=args.cache,
    )
    text = emit_csv(records)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as f:
            f.write(emit_json(records))
    return 0


def _cmd_check(args):
    report = run_check(
        args.config,
        trials=args.trials,
        seed=args.seed,
        channels=args.channels,
        corrupt_ring=args.flip_ring_bit,
    )
    for line in report.lines():
        print(line)
    if report.passed:
        print(f"result: PASS ({report.trials} trials, seed {args.seed})")
        return 0
    where = report.failure or "unknown"
    if report.failed_trial_seed is not None:
        print(f"result: FAIL in {where}, first failing trial seed "
              f"{report.failed_trial_seed}")
    else:
        print(f"result: FAIL in {where}")
    return 1


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_check(args)
    except BevxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
