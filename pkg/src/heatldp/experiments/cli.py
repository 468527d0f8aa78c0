"""Command line entry point: ``heatldp <experiment> --config FILE``.

Exit status is 0 when every assertion passes, 1 when one fails and 2 for
configuration or runtime errors. Set ``HEATLDP_THREADS`` to cap the BLAS
thread count.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

import numpy as np

from heatldp.experiments.config import EXPERIMENTS, FORMATS, ConfigError, load_config
from heatldp.experiments.report import emit_report
from heatldp.experiments.runner import run_experiment
from heatldp.heat import ResolutionError
from heatldp.mmspace import SpaceError
from heatldp.schrodinger import SinkhornError
from heatldp.transport import TransportError

RUNTIME_ERRORS = (ResolutionError, SpaceError, SinkhornError, TransportError, np.linalg.LinAlgError, OSError, ValueError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heatldp", description="Run a configured heat-kernel experiment.")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run {name}")
        p.add_argument("--config", required=True, metavar="PATH", help="INI configuration file")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, metavar="N", help="random seed (overrides the config)")
        p.add_argument("--format", choices=FORMATS, help="table format (overrides the config)")
        p.add_argument("-q", "--quiet", action="store_true", help="only print failures")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = load_config(args.config, args.experiment)
        changes = {}
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed", "must be nonnegative")
            changes["seed"] = args.seed
        if args.out is not None:
            changes["out_dir"] = args.out
        if args.format is not None:
            changes["format"] = args.format
        cfg = dataclasses.replace(cfg, **changes)
        bundle = run_experiment(cfg)
        emit_report(bundle, cfg.out_dir, cfg.format)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RUNTIME_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    for a in bundle.assertions:
        if not (args.quiet and a.passed):
            status = "PASS" if a.passed else "FAIL"
            print(f"{status} {a.name}: {a.measured:.6g} {a.relation} {a.tolerance:.6g}")
    return 0 if bundle.passed else 1


if __name__ == "__main__":
    sys.exit(main())
