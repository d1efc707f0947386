"""Command-line entry point: ``qndsoliton SCENARIO CONFIG [--out DIR] [--seed N]``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .config import SCENARIOS, load_config
from .errors import ConfigError, NumericError, OutputError, QndError
from .scenarios import SCENARIO_FUNCS

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4
EXIT_PARTIAL = 5

log = logging.getLogger("qndsoliton")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qndsoliton",
                                description="Soliton collision QND simulator.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="scenario", metavar="SCENARIO", required=True)
    for name in SCENARIOS:
        sp = sub.add_parser(name, help=f"run the {name} scenario")
        sp.add_argument("config", metavar="CONFIG", help="YAML run configuration")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        sp.add_argument("--seed", type=int, help="override noise.seed")
        sp.add_argument("-v", "--verbose", action="count", default=0,
                        help="more logging (repeat for debug)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, scenario=args.scenario, output_dir=args.out, seed=args.seed)
        result = SCENARIO_FUNCS[args.scenario](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OutputError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except QndError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    failed = 0
    if isinstance(result, tuple):
        result, failed = result
    for path in result:
        print(path)
    if failed:
        print(f"{failed} sweep point(s) failed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
