"""Command-line entry point.

Subcommands:
  run <config>          single experiment -> metrics.csv + summary.json
  suite <dir>           run all *.cfg in a directory, pair against baseline
  check-qbr             robustness property check on random candidate sets
  bounds B q r D L tau_max d   print the theoretical constants and bounds

Exit code 0 on success; nonzero on validation errors, starvation, a
diverged run, or a failed suite tolerance.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from ._kernels import backend_name
from .aggregation import (
    BoundInputs,
    aggregate_bias_bound,
    aggregate_second_moment_bound,
    aggregator_by_name,
    check_qbr,
    robustness_order,
    second_moment_constant,
    second_moment_constant_bound,
)
from .config import load_config, with_overrides
from .errors import ConfigError, PairingError
from .harness import compare_suite, load_suite, run_experiment


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bufsgd",
                                     description="buffered asynchronous SGD simulator")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__} ({backend_name()} kernels)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a single experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--out", default="out", help="output directory")

    p_suite = sub.add_parser("suite", help="run a directory of paired configs")
    p_suite.add_argument("directory")
    p_suite.add_argument("--seed", type=int, default=None, help="override every config seed")
    p_suite.add_argument("--out", default="out", help="output directory")

    p_qbr = sub.add_parser("check-qbr", help="verify robustness properties on random inputs")
    p_qbr.add_argument("--aggregator", choices=("mean", "median", "trmean"), default="median")
    p_qbr.add_argument("--candidates", "-B", type=int, default=5)
    p_qbr.add_argument("--q", type=int, default=None,
                       help="robustness order to check (default: the rule's own)")
    p_qbr.add_argument("--dim", "-d", type=int, default=3)
    p_qbr.add_argument("--trials", type=int, default=100)
    p_qbr.add_argument("--seed", type=int, default=0)

    p_bounds = sub.add_parser("bounds", help="print constants and bounds for (B,q,r,D,L,tau_max,d)")
    for name, kind in (("B", int), ("q", int), ("r", int), ("D", float),
                       ("L", float), ("tau_max", int), ("d", int)):
        p_bounds.add_argument(name, type=kind)

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigError, PairingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "run":
        cfg = load_config(args.config)
        summary = run_experiment(cfg, args.out, seed=args.seed)
        print(json.dumps(summary, indent=2, sort_keys=True))
        return 0 if summary["completed"] and not summary["diverged"] else 1

    if args.command == "suite":
        configs = load_suite(args.directory)
        if args.seed is not None:
            configs = [with_overrides(c, seed=args.seed) for c in configs]
        report = compare_suite(configs, args.out)
        for row in report["rows"]:
            status = "pass" if row["passed"] else "FAIL"
            print(f"{status}  {row['name']}: final_loss={row['final_loss']:.6g} "
                  f"ratio={row['ratio']:.3f} tolerance={row['tolerance']}")
        print(f"baseline {report['baseline']}: final_loss={report['baseline_final_loss']:.6g}")
        return 0 if report["all_passed"] else 1

    if args.command == "check-qbr":
        b, d = args.candidates, args.dim
        q = args.q if args.q is not None else max(robustness_order(args.aggregator, b, (b - 1) // 2), 1)
        aggr = aggregator_by_name(args.aggregator, q if args.aggregator == "trmean" else 0)
        rng = np.random.default_rng(args.seed)
        failures = 0
        first_report = None
        for trial in range(args.trials):
            stack = rng.normal(scale=5.0, size=(b, d))
            report = check_qbr(aggr, stack, q, seed=args.seed + trial)
            if not report.passed:
                failures += 1
                first_report = first_report or report
        verdict = "q-BR holds" if failures == 0 else "q-BR VIOLATED"
        print(f"{verdict}: {args.aggregator} B={b} q={q} d={d} "
              f"trials={args.trials} failures={failures}")
        if first_report is not None:
            for violation in first_report.violations[:5]:
                print(f"  {violation}")
        return 0 if failures == 0 else 1

    # bounds
    bi = BoundInputs(D=args.D, L=args.L, tau_max=args.tau_max, d=args.d)
    c = second_moment_constant(args.B - args.r, args.q - args.r + 1)
    out = {
        "C": c,
        "C_upper_bound": second_moment_constant_bound(args.B, args.q, args.r),
        "second_moment_bound": aggregate_second_moment_bound(bi, args.B, args.q, args.r),
        "bias_bound": aggregate_bias_bound(bi, args.B, args.q, args.r),
    }
    print(json.dumps(out, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
