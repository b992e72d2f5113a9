"""Command-line front end for the point-mass constraint-learning experiments.

``qprl run`` trains one configuration and writes CSV learning curves, theta
snapshots and constraint-matrix dumps; ``qprl compare`` tabulates finished
runs. The QPRL_OUT environment variable overrides the default output root.
"""

from __future__ import annotations

import argparse
import sys

from qprl.experiment import (
    CONFIG_IDS,
    NOISE_KINDS,
    ConfigError,
    ExperimentConfig,
    compare,
    load_config,
    run,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qprl",
                                description="QP value-function learning experiments")
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="train one experiment configuration")
    pr.add_argument("--config", help="key = value config file (see README)")
    pr.add_argument("--config-id", choices=CONFIG_IDS,
                    help="penalty configuration (overrides config file)")
    pr.add_argument("--noise", choices=NOISE_KINDS,
                    help="noise regime (overrides config file)")
    pr.add_argument("--seed-env", type=int, help="environment seed")
    pr.add_argument("--seed-corruption", type=int, help="model-corruption seed")
    pr.add_argument("--out", help="output directory (overrides QPRL_OUT root)")

    pc = sub.add_parser("compare", help="summarize finished runs")
    pc.add_argument("run_dirs", nargs="+", help="run output directories")
    pc.add_argument("--out", default="summary.csv", help="summary CSV path")
    return p


def _resolve_run_config(args) -> ExperimentConfig:
    from dataclasses import replace
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.config_id is not None:
        overrides["config_id"] = args.config_id
    if args.noise is not None:
        overrides["noise"] = args.noise
    if args.seed_env is not None:
        overrides["seed_env"] = args.seed_env
    if args.seed_corruption is not None:
        overrides["seed_corruption"] = args.seed_corruption
    if args.out is not None:
        overrides["out_dir"] = args.out
    return replace(cfg, **overrides) if overrides else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        try:
            cfg = _resolve_run_config(args)
        except (ConfigError, FileNotFoundError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        try:
            artifacts = run(cfg)
        except Exception as exc:  # manifest already records the failure
            print(f"run failed: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        print(artifacts.out_dir)
        return EXIT_OK

    if args.command == "compare":
        try:
            path = compare(args.run_dirs, out_path=args.out)
        except (FileNotFoundError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        print(path)
        return EXIT_OK

    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
