"""Command line entry point: ``aimlab <kind> --config FILE [--seed N] [--out DIR] [--set k=v ...]``.

Exit codes: 0 all checks passed, 2 configuration or capability error,
3 numerical failure (divergence, non-finite values, non-convergence),
4 a check failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import (
    AimlabError,
    ConfigError,
    InvalidStepsize,
    MissingProjector,
    NoSolutionInRegion,
    NoValidProbe,
    PreconditionViolated,
    RadiusTooLarge,
)
from .experiment import KINDS, load_config, parse_override, resolve_config, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4

_CONFIG_ERRORS = (ConfigError, MissingProjector, InvalidStepsize, PreconditionViolated, RadiusTooLarge, NoSolutionInRegion, NoValidProbe)

log = logging.getLogger("aimlab")


def build_parser():
    ap = argparse.ArgumentParser(prog="aimlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind)
        sp.add_argument("--config", help="YAML config; defaults are used for missing keys")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--out", default="out", help="output root; runs go to OUT/<config-hash>/")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key, e.g. sgd.eta=0.1")
        sp.add_argument("-q", "--quiet", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        overrides = [parse_override(s) for s in args.set]
        if args.seed is not None:
            overrides.append({"seed": args.seed})
        if args.config:
            cfg = load_config(args.config, overrides)
            if cfg["kind"] != args.kind:
                raise ConfigError(f"config kind {cfg['kind']!r} does not match command {args.kind!r}")
        else:
            cfg = resolve_config({"kind": args.kind}, overrides)
        record, run_dir = run_experiment(cfg, args.out)
    except _CONFIG_ERRORS as exc:
        log.error("error: %s", exc)
        return EXIT_CONFIG
    except AimlabError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (FloatingPointError, OverflowError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    log.info("run directory: %s", run_dir)
    for name, ok in record["checks"].items():
        log.info("%-32s %s", name, "pass" if ok else "FAIL")
    if record.get("diverged"):
        return EXIT_NUMERIC
    return EXIT_OK if record.passed else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
