"""Command-line driver: ``disco-scenario --config FILE [--seed N] [--out FILE]``."""
from __future__ import annotations

import argparse
import contextlib
import re
import sys

from ..simnet import MS, SECOND, US
from .config import ConfigInvalid, load_config
from .harness import dump_metrics, run_scenario

_UNITS = {"": US, "us": US, "ms": MS, "s": SECOND}


def parse_simtime(text: str) -> int:
    """``"25s"``, ``"500ms"``, ``"1200us"`` or a bare microsecond count."""
    m = re.fullmatch(r"\s*(\d+(?:\.\d+)?)\s*(us|ms|s)?\s*", text)
    if not m:
        raise argparse.ArgumentTypeError(f"not a simulation time: {text!r}")
    return round(float(m.group(1)) * _UNITS[m.group(2) or ""])


def parse_seed(text: str) -> int:
    try:
        seed = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= seed < 1 << 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return seed


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="disco-scenario", description="Run the DDoS detection scenario and write metrics.")
    p.add_argument("--config", required=True, metavar="PATH", help="scenario INI file")
    p.add_argument("--seed", type=parse_seed, help="overrides traffic.seed")
    p.add_argument("--out", metavar="PATH", help="metrics JSON (default: stdout)")
    p.add_argument("--trace", metavar="PATH", help="write the simulation trace log here")
    p.add_argument("--until", type=parse_simtime, metavar="SIMTIME", help="stop early, e.g. 12s or 500ms")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
    except ConfigInvalid as exc:
        print(f"disco-scenario: invalid config: {exc}", file=sys.stderr)
        return 2
    with contextlib.ExitStack() as stack:
        trace = stack.enter_context(open(args.trace, "w", encoding="utf-8")) if args.trace else None
        try:
            metrics = run_scenario(config, args.seed, trace, args.until)
        except ConfigInvalid as exc:
            print(f"disco-scenario: invalid config: {exc}", file=sys.stderr)
            return 2
    text = dump_metrics(metrics)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
