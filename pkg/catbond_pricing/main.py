"""
Command-line entry point.

    python -m catbond_pricing.main price --config configs/reference.json --c 1.5e7 --t 0 --k 1
    python -m catbond_pricing.main surface price --out price.csv --svg price.svg
    python -m catbond_pricing.main loading --out loading.csv
    python -m catbond_pricing.main verify --paths 100000 --seed 7
"""

import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from catbond_pricing.cli.commands import (
    EXIT_CONFIG_ERROR,
    SURFACE_KINDS,
    cmd_price,
    cmd_surface,
    cmd_verify,
)
from catbond_pricing.config import RunConfig
from catbond_pricing.core.errors import PricingError
from catbond_pricing.core.state import PriceQuery

logger = logging.getLogger(__name__)


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON run configuration; built-in defaults when omitted")
    parser.add_argument("--c", type=float, help="Index level (currency)")
    parser.add_argument("--t", type=float, help="Valuation time (years)")
    parser.add_argument("--k", type=float, help="Quantity (signed)")
    parser.add_argument("--out", help="CSV destination; stdout when omitted")
    parser.add_argument("--svg", help="SVG destination (surface commands)")
    parser.add_argument("--paths", type=int, help="Override sim.n_paths")
    parser.add_argument("--seed", type=int, help="Override sim.seed")
    parser.add_argument("--log-level", default="WARNING", help="Logging level written to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="catbond-pricing", description="Indifference pricing of CAT derivatives")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("price", help="Print prices, limits and the optimal loading at one point"))
    surface = sub.add_parser("surface", help="Write a surface as CSV (and SVG)")
    surface.add_argument("kind", choices=SURFACE_KINDS)
    _common(surface)
    _common(sub.add_parser("loading", help="Same as 'surface loading'"))
    _common(sub.add_parser("verify", help="Monte-Carlo verification table"))
    return parser


def describe_validation_error(error: ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(part) for part in item['loc'])}: {item['msg']}" for item in error.errors())


def load_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    return config.with_overrides(
        {
            "sim.n_paths": args.paths,
            "sim.seed": args.seed,
            "output.csv": args.out,
            "output.svg": args.svg,
        }
    )


def dispatch(args: argparse.Namespace, config: RunConfig) -> int:
    k = 1.0 if args.k is None else args.k
    t = 0.0 if args.t is None else args.t
    default_c = config.output.queries[0].c if config.output.queries else 0.0
    if args.command == "price":
        return cmd_price(config, default_c if args.c is None else args.c, t, k)
    if args.command in ("surface", "loading"):
        kind = getattr(args, "kind", "loading")
        return cmd_surface(config, kind, k)
    queries = None
    if args.c is not None or args.k is not None:
        queries = [PriceQuery(c=default_c if args.c is None else args.c, t=t, k=k)]
    return cmd_verify(config, queries)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args)
    except ValidationError as error:
        sys.stderr.write(f"configuration error: {describe_validation_error(error)}\n")
        return EXIT_CONFIG_ERROR
    except (OSError, ValueError) as error:
        sys.stderr.write(f"configuration error: {error}\n")
        return EXIT_CONFIG_ERROR

    try:
        return dispatch(args, config)
    except ValidationError as error:
        sys.stderr.write(f"invalid input: {describe_validation_error(error)}\n")
        return EXIT_CONFIG_ERROR
    except (ValueError, PricingError) as error:
        sys.stderr.write(f"error: {error}\n")
        return EXIT_CONFIG_ERROR
    except OSError as error:
        sys.stderr.write(f"cannot write output: {error}\n")
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
