"""Command-line front end: ``run``, ``plan`` and ``sweep-beta-b``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import analysis, bench
from .ebud import UnsupportedReliability

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENT = 3


def _cmd_run(args) -> int:
    specs = bench.resolve_scenario(args.scenario)
    rows = []
    for i, spec in enumerate(specs):
        spec = bench.with_overrides(spec, trials=args.trials, master_seed=args.seed)
        rows.extend(bench.run_scenario(spec, scenario_index=i, threads=args.threads))
    out = bench.emit_results(rows, args.out, args.format)
    print(f"wrote {len(rows)} rows to {out}")
    return EXIT_OK


def _cmd_plan(args) -> int:
    res = analysis.plan(args.k, args.alpha, args.u_est, gamma=args.gamma, beta=args.beta, B=args.b,
                        M_ratio=args.m_ratio)
    for name, value in res._asdict().items():
        print(f"{name}: {value:.6g}" if isinstance(value, float) else f"{name}: {value}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    rows = analysis.sweep_beta_b(args.k, encoding=args.model, segmented=not args.unsegmented)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["beta", "B", "T2_ms"])
        for beta, B, t2 in rows:
            w.writerow([f"{beta:.6g}", B, f"{t2:.6g}"])
    finally:
        if args.out:
            fh.close()
    beta, B, t2 = analysis.sweep_argmin(rows)
    print(f"minimum T2 {t2:.6g} ms at beta={beta:g}, B={B}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="etmti", description="Missing-tag identification simulator and analysis")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a preset or a YAML scenario file")
    run.add_argument("--scenario", required=True, help="preset name (S11..S33) or path to a YAML file")
    run.add_argument("--out", required=True, type=Path)
    run.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--threads", type=int, default=1)
    run.set_defaults(func=_cmd_run)

    plan = sub.add_parser("plan", help="closed-form plan for one deployment")
    plan.add_argument("--k", type=int, required=True)
    plan.add_argument("--alpha", type=float, required=True)
    plan.add_argument("--u-est", type=float, required=True)
    plan.add_argument("--gamma", type=float, default=0.25)
    plan.add_argument("--beta", type=float, default=0.95)
    plan.add_argument("--b", type=int, default=3)
    plan.add_argument("--m-ratio", type=float, default=0.3)
    plan.set_defaults(func=_cmd_plan)

    sweep = sub.add_parser("sweep-beta-b", help="T2 over the (beta, B) grid as CSV")
    sweep.add_argument("--k", type=int, required=True)
    sweep.add_argument("--out", type=Path)
    sweep.add_argument("--model", choices=("flat", "exact"), default="flat",
                       help="BV length model: 2 bits per visited slot, or the real 0/10/11 mix")
    sweep.add_argument("--unsegmented", action="store_true", help="skip per-frame rounding to 96-bit segments")
    sweep.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (bench.ConfigError, UnsupportedReliability, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except analysis.AnalysisError as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENT


if __name__ == "__main__":
    sys.exit(main())
