"""Command-line entry point.

Exit codes: 0 all verdicts pass, 1 a verdict failed, 2 usage or
configuration error, 3 numerical error (feature overflow, degenerate q_hat,
rejection envelope).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..errors import ConfigError, NumericalError
from . import experiments
from .config import DATA_PARAMS, load_config
from .data import SYNTHETIC_KINDS, gen_data

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="key = value experiment file")
    parser.add_argument("--seed", type=int, metavar="U64", help="override the config seed")
    parser.add_argument("--out", metavar="PATH", help="write the result here instead of stdout")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override one config key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rfsample", description="Random-feature kernel estimates under optimal importance sampling.",
                     epilog="exit codes: 0 pass, 1 verdict failed, 2 usage or config error, 3 numerical error")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write a synthetic dataset as CSV")
    _common(p)
    p.add_argument("--kind", choices=SYNTHETIC_KINDS, default="gaussian_blob")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--param", action="append", default=[], metavar="NAME=VALUE",
                   help="generator parameter, e.g. sd=1 or point=0,0 (repeatable)")

    for name, text in (
        ("check-rep", "Monte Carlo kernel estimates against closed forms"),
        ("variance-report", "empirical, optimal and bound variances with verdicts"),
        ("compare-reps", "optimal variances of several representations"),
    ):
        _common(sub.add_parser(name, help=text))

    p = sub.add_parser("sweep", help="CSV table over one parameter")
    _common(p)
    p.add_argument("--axis", required=True, choices=experiments.SWEEP_AXES)
    p.add_argument("--values", required=True, help="comma-separated ascending values")
    return parser


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    with open(Path(out), "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _parse_params(items, kind: str) -> dict:
    params = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep or not value:
            raise ConfigError(f"--param expects NAME=VALUE, got {item!r}")
        if name not in DATA_PARAMS[kind]:
            raise ConfigError(f"{kind} takes {sorted(DATA_PARAMS[kind])}, not {name!r}")
        params[name] = value
    return params


def _parse_values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values: cannot parse {text!r}") from None


def run(args: argparse.Namespace) -> int:
    if args.command == "gen-data":
        seed = 1 if args.seed is None else args.seed
        if args.out is None:
            raise ConfigError("gen-data needs --out")
        gen_data(args.kind, args.d, args.n, _parse_params(args.param, args.kind), seed, args.out)
        return EXIT_PASS
    config = load_config(args.config, args.overrides, seed=args.seed, out=args.out)
    if args.command == "sweep":
        rows = experiments.sweep(config, args.axis, _parse_values(args.values))
        _emit(experiments.sweep_csv(rows), config.out)
        return EXIT_PASS
    driver = {
        "check-rep": experiments.check_rep,
        "variance-report": experiments.variance_report,
        "compare-reps": experiments.compare_reps,
    }[args.command]
    doc = driver(config)
    _emit(dumps(doc), config.out)
    print(f"{args.command}: {'pass' if doc['pass'] else 'FAIL'}", file=sys.stderr)
    return EXIT_PASS if doc["pass"] else EXIT_FAIL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except NumericalError as exc:
        print(f"rfsample: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"rfsample: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
