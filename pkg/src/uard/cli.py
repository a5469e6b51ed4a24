"""Command-line entry point: ``uard <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

from . import harness
from .config import ConfigError, parse_config

# flag -> config key; values are passed through as raw strings so the config
# table does all validation
FLAG_KEYS = {
    "grid": "grid",
    "lambda": "lambda",
    "alpha": "alpha",
    "beta": "beta",
    "variant": "variant",
    "seeds": "seeds",
    "episodes": "episodes",
    "noise": "noise",
    "mode": "mode",
    "jobs": "jobs",
    "out": "out",
    "base_seed": "base_seed",
    "lambdas": "lambdas",
    "noise_levels": "noise_levels",
    "head_rewards": "head_rewards",
    "filter": "filter",
}
SWITCH_KEYS = ("hard_trap", "abstain", "adaptive", "dump_q")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="flat key = value config file")
    p.add_argument("--grid", choices=("6", "8", "10"), help="grid preset (default 6)")
    p.add_argument("--lambda", dest="lambda", metavar="F", help="skepticism lambda (default 5)")
    p.add_argument("--alpha", metavar="F", help="weight on ensemble uncertainty (default 0.5)")
    p.add_argument("--beta", metavar="F", help="weight on annotator disagreement (default 0.5)")
    p.add_argument("--variant", metavar="NAME|all", help="variant name, comma list, or all")
    p.add_argument("--seeds", metavar="N", help="number of seeds (default 10)")
    p.add_argument("--episodes", metavar="N", help="episodes per run (default 500)")
    p.add_argument("--noise", metavar="F", help="supervisory noise level in [0, 1]")
    p.add_argument("--hard-trap", dest="hard_trap", action="store_true", help="trap observed reward 8")
    p.add_argument("--mode", choices=("score", "reward"), help="discount at action scores or rewards")
    p.add_argument("--abstain", action="store_true", help="defer when every action is too risky")
    p.add_argument("--adaptive", action="store_true", help="adapt lambda to recent uncertainty")
    p.add_argument("--jobs", metavar="N", help="worker processes (default 1)")
    p.add_argument("--out", metavar="DIR", help="output directory (default out)")
    p.add_argument("--base-seed", dest="base_seed", metavar="U64", help="first seed (default 0)")
    p.add_argument("--lambdas", metavar="F,F,...", help="lambda values for lambda-sweep")
    p.add_argument("--noise-levels", dest="noise_levels", metavar="F,F,...", help="levels for noise-sweep")
    p.add_argument("--head-rewards", dest="head_rewards", choices=("mean", "annotator", "resample"),
                   help="reward each ensemble head trains on (default resample)")
    p.add_argument("--filter", choices=("Reciprocal", "LinearSubtraction", "ExponentialDecay"),
                   help="score shape (default Reciprocal)")
    p.add_argument("--dump-q", dest="dump_q", action="store_true", help="also write final Q tables")
    p.add_argument("-v", "--verbose", action="store_true", help="log each run CSV as it is written")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uard", description="Uncertainty-filtered Q-learning experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "suite": "variant x seed matrix under one configuration",
        "noise-sweep": "Baseline and UARD-Full across supervisory noise levels",
        "lambda-sweep": "Baseline and UARD-Full across skepticism values",
        "filter-curves": "export filter-shape comparison curves",
        "ood-test": "runs with a one-off state perturbation",
        "stats": "recompute aggregates and reports from existing CSVs",
    }
    for name, text in helps.items():
        _common(sub.add_parser(name, help=text, description=text))
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, str | None]:
    out = {key: getattr(args, attr) for attr, key in FLAG_KEYS.items()}
    for key in SWITCH_KEYS:
        if getattr(args, key):
            out[key] = "true"
    return out


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            spec = parse_config(args.config, _overrides(args))
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)

    explicit_variants = list(spec.variants) if args.variant else None
    try:
        if args.command == "suite":
            bundle = harness.run_suite(spec)
        elif args.command == "noise-sweep":
            bundle = harness.run_noise_sweep(spec, explicit_variants)
        elif args.command == "lambda-sweep":
            bundle = harness.run_lambda_sweep(spec, explicit_variants)
        elif args.command == "ood-test":
            bundle = harness.run_ood_test(spec, explicit_variants)
        elif args.command == "filter-curves":
            print(harness.run_filter_ablation(spec))
            return 0
        else:
            suites = harness.find_suites(spec.out)
            if not suites:
                print(f"error: no suite results under {spec.out}", file=sys.stderr)
                return 1
            for suite_dir in suites:
                print(harness.recompute(suite_dir).report_md)
            return 0
    except harness.RunError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(Path(bundle.report_md))
    return 0


if __name__ == "__main__":
    sys.exit(main())
