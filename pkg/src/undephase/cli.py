"""Command-line interface: one subcommand per experiment.

Exit codes: 0 on success, 1 on configuration or I/O errors, 2 when the run
aborts on a numerical-validity failure (non-finite output or Fock-cutoff
leakage).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .config import EXPERIMENTS, ConfigError, parse_config
from .csvio import NanError, emit_csv
from .harness import NumericalValidityError, run_experiment

_HELP = {
    "fields": "cavity field amplitudes and the derived dephasing and Stark rates",
    "trajectory": "one conditional homodyne trajectory with its phase correction",
    "ensemble": "mean-state purity versus waiting time for the three feedback variants",
    "bandwidth-sweep": "final purity versus amplifier bandwidth (two-resonator chain)",
    "efficiency-sweep": "final purity versus detector efficiency",
    "protocol": "heralded phase-window benchmark versus acceptance half-width",
    "verify-appendix": "internal consistency checks of the simulation identities",
}


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; the CLI contract reserves
    # 2 for numerical failures, so route usage errors through ConfigError
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="undephase", description="measurement-induced dephasing undone")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")
    for name in EXPERIMENTS:
        s = sub.add_parser(name, help=_HELP[name])
        s.add_argument("--config", help="key = value file; omitted keys take the defaults")
        s.add_argument("--seed", type=int, help="master seed override")
        s.add_argument("--trajectories", type=int, help="trajectory count override")
        s.add_argument("--dt", type=float, help="integration step override")
        s.add_argument("--out", help="output CSV path (default: <experiment>.csv)")
    return parser


def _load_config(args: argparse.Namespace):
    text = ""
    if args.config is not None:
        with open(args.config, "r", encoding="utf-8") as fh:
            text = fh.read()
    cfg = parse_config(text, experiment=args.experiment)
    overrides = {}
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("'seed' must be nonnegative")
        overrides["seed"] = args.seed
    if args.trajectories is not None:
        if args.trajectories < 1:
            raise ConfigError("'trajectories' must be at least 1")
        overrides["trajectories"] = args.trajectories
    if args.dt is not None:
        if not args.dt > 0.0:
            raise ConfigError("'dt' must be positive")
        overrides["dt"] = args.dt
    if overrides:
        cfg = dataclasses.replace(
            cfg, provided=cfg.provided | frozenset(overrides), **overrides
        )
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _load_config(args)
        table = run_experiment(cfg)
        out = args.out or cfg.output or f"{cfg.experiment}.csv"
        emit_csv(table, out, context=cfg.experiment)
    except (NanError, NumericalValidityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0
