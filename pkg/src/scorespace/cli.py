"""Command-line entry point: ``scorespace {gen,loocv,minset,regret,golden}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bench
from .domains import load_config
from .experience import ExperienceBundle
from .golden import FLIPPED_SCORES, run_golden

EXIT_OK, EXIT_CONFIG, EXIT_ACCEPTANCE = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scorespace", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [("gen", "generate a training bundle"),
                            ("loocv", "leave-one-out policy comparison"),
                            ("minset", "BOX on the minimal constraint set vs the full library"),
                            ("regret", "Monte-Carlo check of the regret bound"),
                            ("golden", "replay the four-direction example")]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="TOML or JSON config")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--policies", help="comma-separated subset of box,static,rand,doo,raw")
        p.add_argument("--k", type=int, help="evaluation budget")
        p.add_argument("--zeta", type=float, help="BOX exploration constant")
        p.add_argument("--trials", type=int, help="Monte-Carlo trials")
        p.add_argument("--bundle", type=Path, help="existing bundle directory (default: generate)")
        p.add_argument("--workers", type=int, help="thread pool size for folds")
    return parser


def _config(args) -> bench.BenchConfig:
    raw = load_config(args.config) if args.config else {}
    for key in ("seed", "k", "zeta", "trials", "policies", "workers"):
        value = getattr(args, key)
        if value is not None:
            raw[key] = value
    if args.out is not None:
        raw["out"] = str(args.out)
    return bench.BenchConfig.from_dict(raw)


def _bundle(args, cfg):
    if args.bundle is not None:
        return ExperienceBundle.load(args.bundle)
    bundle, _ = bench.cmd_gen(cfg, Path(cfg.out))
    return bundle


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "golden":
            zeta = args.zeta if args.zeta is not None else bench.DEFAULT_ZETA
            report = run_golden(zeta=zeta)
            control = run_golden(FLIPPED_SCORES, zeta=zeta)
            control_fails = not control.rise_fall_passed
            for name, ok in report.checks.items():
                print(f"{'PASS' if ok else 'FAIL'} {name}")
            print(f"{'PASS' if control_fails else 'FAIL'} negative_control_rejected")
            return EXIT_OK if report.passed and control_fails else EXIT_ACCEPTANCE
        try:
            cfg = _config(args)
        except ValueError as exc:  # includes TOML/JSON decode errors
            raise bench.ConfigError(str(exc)) from exc
        out = Path(cfg.out)
        if args.command == "gen":
            _, summary = bench.cmd_gen(cfg, out)
            _print(summary)
        elif args.command == "loocv":
            summary = bench.cmd_loocv(cfg, _bundle(args, cfg), out)
            _print(summary["first_feasible"])
        elif args.command == "minset":
            _print(bench.cmd_minset(cfg, _bundle(args, cfg), out))
        elif args.command == "regret":
            bundle = None if cfg.regret_synthetic else _bundle(args, cfg)
            reports = bench.cmd_regret(cfg, bundle, out)
            _print([r.__dict__ for r in reports])
            limit = cfg.delta + 3 * (cfg.delta * (1 - cfg.delta) / cfg.trials) ** 0.5
            if any(r.violation_rate > limit for r in reports):
                return EXIT_ACCEPTANCE
    except (bench.ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
