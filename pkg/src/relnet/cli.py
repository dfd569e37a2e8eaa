"""Command line entry point: ``relnet <experiment> --config PATH``.

Exit codes: 0 on success, 2 for configuration errors, 3 for numerical
failures.  The output directory defaults to ``$RELNET_OUT`` and then to
``relnet-out`` in the working directory.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import EXPERIMENTS, load_config
from .errors import ConfigError, NumericalError
from .experiments import RunOptions, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
OUT_ENV = "RELNET_OUT"

logger = logging.getLogger("relnet")


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _non_negative(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relnet",
        description="Reliability, repair correlations and key rates of multiplexed quantum networks.",
    )
    parser.add_argument("experiment", choices=EXPERIMENTS + ("validate",))
    parser.add_argument("--config", required=True, help="JSON experiment configuration")
    parser.add_argument("--seed", type=_non_negative, help="override the config seed")
    parser.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./relnet-out)")
    parser.add_argument("--samples", type=_positive, help="override Monte Carlo sample counts")
    parser.add_argument("--threads", type=_positive, default=1, help="worker threads for sampling")
    parser.add_argument("-q", "--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = load_config(args.config)
        if args.experiment == "validate":
            if cfg.experiment is None:
                raise ConfigError(f"{args.config}: experiment: required field is missing")
            _dry_validate(cfg)
            print(f"{args.config}: ok ({cfg.experiment})")
            return EXIT_OK
        out = args.out or cfg.data.get("output") or os.environ.get(OUT_ENV) or "relnet-out"
        opts = RunOptions(seed=args.seed, samples=args.samples, threads=args.threads)
        writer = run_experiment(args.experiment, cfg, out, opts)
        for name in writer.files:
            logger.info("wrote %s", os.path.join(str(writer.out_dir), name))
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def _dry_validate(cfg) -> None:
    """Check the experiment-specific fields without running anything heavy."""
    from . import experiments as ex

    exp = cfg.experiment
    if exp == "reliability-curves":
        cfg.grid("time_grid", lo=0.0)
        for i, name in enumerate(cfg.get("systems")):
            cfg.topology(name, f"systems[{i}]")
        models = cfg.get("models")
        if not isinstance(models, dict) or not models:
            raise cfg.error("models", "expected an object of named block models")
        for name in models:
            cfg.block_model(f"models.{name}")
    elif exp == "match-multiplicity":
        for f in ("reference.M", "reference.N", "reference.k"):
            cfg.number(f, lo=0)
        cfg.grid("p_grid", lo=0.0, hi=1.0)
        cfg.grid("mu_prime_grid", lo=0.0)
    elif exp == "repair-correlations":
        cfg.number("tau", integer=True, lo=1)
        cfg.grid("p_down_grid", lo=0.0, hi=1.0)
        ex._repair_systems(cfg)
    elif exp == "key-rates":
        ex._protocol(cfg, ex.RunOptions())
        if cfg.get("network", None) is None and cfg.get("chain", None) is None:
            raise cfg.error("network", "key-rates needs a 'network' and/or a 'chain' section")
        if cfg.get("network", None) is not None:
            cfg.topology(cfg.get("network.topology"), "network.topology")


if __name__ == "__main__":
    sys.exit(main())
