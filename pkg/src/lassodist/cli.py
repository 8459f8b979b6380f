"""Command-line entry points for the simulation harness.

Subcommands: ``qq``, ``coverage``, ``width``, ``fixpoint``; each takes
``--config`` (JSON), and optional ``--seed``, ``--out``, ``--threads``
overrides.  Exit codes: 0 success, 2 configuration error, 3 numerical
failure (for example a non-convergent fixed point; its trace is written
before exiting).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .errors import ConfigError, NonConvergenceError
from .experiments import (
    ExperimentConfig,
    run_coverage_experiment,
    run_fixed_point_validation,
    run_qq_experiment,
    run_width_threshold_experiment,
)

_RUNNERS = {
    "qq": run_qq_experiment,
    "coverage": run_coverage_experiment,
    "width": run_width_threshold_experiment,
    "fixpoint": run_fixed_point_validation,
}

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lassodist",
        description="Lasso distribution simulations: debiasing QQ study, "
                    "interval coverage, Gaussian-width threshold, and "
                    "fixed-point validation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("qq", "standardized debiased coordinates with/without DOF adjustment"),
        ("coverage", "interval coverage for a single coordinate"),
        ("width", "Gaussian width histogram and risk/sparsity threshold sweep"),
        ("fixpoint", "fixed-point solution versus simulated concentration"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="JSON config file")
        cmd.add_argument("--seed", type=int, default=None, help="override master seed")
        cmd.add_argument("--out", default=None, help="output directory (default: cwd/<command>_out)")
        cmd.add_argument("--threads", type=int, default=1, help="replica-level worker threads")
    return parser


def load_config(path, seed_override=None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    cfg = ExperimentConfig.from_dict(raw, base_dir=path.parent)
    if seed_override is not None:
        cfg = dataclasses.replace(cfg, seed=int(seed_override))
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    out_dir = Path(args.out) if args.out else Path.cwd() / f"{args.command}_out"
    try:
        cfg = load_config(args.config, args.seed)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        _RUNNERS[args.command](cfg, out_dir=out_dir, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"wrote results to {out_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
