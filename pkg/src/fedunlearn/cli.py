"""Command-line entry point.

Subcommands select the scenario; everything else comes from a config
file plus per-key overrides:

    fedunlearn train   --config exp.ini --seed 1 --out runs/t1
    fedunlearn compare --set federation.rounds=10 --set trigger.poison_fraction=0.8
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, parse_config
from .runner import run_scenario

_SCENARIO_BY_COMMAND = {
    "train": "train",
    "retrain": "retrain",
    "unlearn": "unlearn",
    "compare": "full-compare",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedunlearn",
        description="Federated training, client erasure, and retrain comparison.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, scenario in _SCENARIO_BY_COMMAND.items():
        p = sub.add_parser(command, help=f"run the {scenario} scenario")
        p.add_argument("--config", metavar="PATH", default=None,
                       help="configuration file (defaults apply when omitted)")
        p.add_argument("--set", metavar="SECTION.KEY=VALUE", action="append", default=[],
                       dest="overrides", help="override one configuration key (repeatable)")
        p.add_argument("--seed", type=int, default=None, help="override run.seed")
        p.add_argument("--out", metavar="DIR", default=None, help="override run.output_dir")
        p.add_argument("--data-dir", metavar="DIR", default=None,
                       help="override data.data_dir (else $FEDUNLEARN_DATA_DIR, else ./data)")


    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    overrides = list(args.overrides)
    overrides.append(f"run.scenario={_SCENARIO_BY_COMMAND[args.command]}")
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if args.out is not None:
        overrides.append(f"run.output_dir={args.out}")
    if args.data_dir is not None:
        overrides.append(f"data.data_dir={args.data_dir}")
    try:
        cfg = parse_config(args.config, overrides)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    progress = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    return run_scenario(cfg, progress=progress)


if __name__ == "__main__":
    sys.exit(main())
