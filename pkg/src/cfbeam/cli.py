"""Command-line entry point: ``cfbeam generate-fingerprint | run | sweep``.

Every SimConfig field has a flag (``--sigma-v``, ``--initial-cell`` ...).
``--config FILE`` reads flat ``key = value`` lines first; flags override it.

Exit codes: 0 success, 2 configuration error, 3 fingerprint I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from typing import Optional, Sequence

from .fingerprint import FingerprintFormatError, default_street_database, save
from .harness import (AXES, SCHEMES, ConfigError, SimConfig, _coerce, config_from_sources,
                      load_database, metrics_row, monte_carlo, sweep_experiment, write_csv)

logger = logging.getLogger("cfbeam")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FINGERPRINT = 3


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value file; flags take precedence")
    group = parser.add_argument_group("simulation parameters")
    defaults = SimConfig()
    for f in dataclasses.fields(SimConfig):
        group.add_argument(_flag(f.name), dest=f.name, default=None, metavar="VALUE",
                           help=f"default: {getattr(defaults, f.name)}")


def _overrides(args: argparse.Namespace) -> dict:
    values = {}
    for f in dataclasses.fields(SimConfig):
        raw = getattr(args, f.name, None)
        if raw is not None:
            values[f.name] = _coerce(f.name, raw)
    return values


def _split(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


def _axis_values(axis: str, text: str) -> list:
    try:
        if axis == "budget":
            return [int(v) for v in _split(text)]
        return [float(v) for v in _split(text)]
    except ValueError as exc:
        raise ConfigError(f"bad value list for axis {axis}: {text!r}") from exc


def _emit(text: str, output: Optional[str]) -> None:
    if output:
        with open(output, "w", newline="") as fh:
            fh.write(text)
        logger.info("wrote %s", output)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfbeam", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate-fingerprint", help="write the synthetic street database")
    gen.add_argument("--output", "-o", required=True, help="destination .cfpd file")
    _add_config_flags(gen)

    run = sub.add_parser("run", help="Monte Carlo metrics for one scheme")
    run.add_argument("--output", "-o", help="CSV path (default: stdout)")
    _add_config_flags(run)

    sweep = sub.add_parser("sweep", help="metrics over one parameter axis")
    sweep.add_argument("--axis", required=True, choices=AXES)
    sweep.add_argument("--values", required=True, help="comma-separated axis values")
    sweep.add_argument("--schemes", default=",".join(SCHEMES),
                       help="comma-separated subset of " + ",".join(SCHEMES))
    sweep.add_argument("--output", "-o", help="CSV path (default: stdout)")
    _add_config_flags(sweep)
    return parser


def _generate(config: SimConfig, output: str) -> None:
    db = default_street_database(config.grid, config.codebook())
    save(db, output)
    logger.info("fingerprint %s: %d cells x %d beams", output, db.grid.num_cells, db.num_beams)


def _run(config: SimConfig, output: Optional[str]) -> None:
    db = load_database(config)
    m = monte_carlo(config, db)
    logger.info("%s: mean gap %.3f dB, coverage %.3f", m.scheme, m.mean_gap_db, m.coverage_ratio)
    _emit(write_csv([metrics_row(m, config)]), output)


def _sweep(config: SimConfig, args: argparse.Namespace) -> None:
    schemes = _split(args.schemes)
    unknown = [s for s in schemes if s not in SCHEMES]
    if unknown or not schemes:
        raise ConfigError(f"unknown scheme(s) {unknown}; choose from {SCHEMES}")
    values = _axis_values(args.axis, args.values)
    rows = sweep_experiment(config, args.axis, values, schemes)
    _emit(write_csv(rows), args.output)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = config_from_sources(args.config, _overrides(args))
        if args.command == "generate-fingerprint":
            _generate(config, args.output)
        elif args.command == "run":
            _run(config, args.output)
        else:
            _sweep(config, args)
    except ConfigError as exc:
        print(f"cfbeam: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FingerprintFormatError, OSError) as exc:
        print(f"cfbeam: fingerprint I/O error: {exc}", file=sys.stderr)
        return EXIT_FINGERPRINT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
