"""Command line entry point: ``mixlab run | compare | validate``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import experiments as _exp

__all__ = ["main", "build_parser"]


def build_parser():
    parser = argparse.ArgumentParser(prog="mixlab", description="Vicinal-risk training experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the experiment described by a JSON config")
    p.add_argument("config")
    p.add_argument("--output-dir", help="override the config's output_dir")

    p = sub.add_parser("compare", help="merge summary.csv reports into one table")
    p.add_argument("reports", nargs="+")
    p.add_argument("--output", help="write the merged table here instead of stdout")

    p = sub.add_parser("validate", help="check a config without running it")
    p.add_argument("config")
    return parser


def _cmd_run(args):
    cfg = _exp.load_config(args.config)
    rows = _exp.run_experiment(cfg, output_dir=args.output_dir)
    sys.stdout.write(_exp.summary_text(cfg.experiment, rows))
    return 0


def _cmd_compare(args):
    header, rows, agg_header, aggregates = _exp.compare(args.reports)
    text = _exp.format_table(header, rows) + "\n" + _exp.format_table(agg_header, aggregates)
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_validate(args):
    cfg = _exp.load_config(args.config)
    sys.stdout.write(f"{args.config}: ok ({cfg.experiment}, {len(cfg.seeds)} seed(s))\n")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _cmd_run, "compare": _cmd_compare, "validate": _cmd_validate}[args.command]
    try:
        return handler(args)
    except _exp.ConfigError as e:
        sys.stderr.write(f"error: {e}\n")
        return 2
    except (OSError, ValueError) as e:
        sys.stderr.write(f"error: {e}\n")
        return 1
