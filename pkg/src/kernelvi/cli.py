"""Command-line harness.

    kernelvi run <config.json> [--output DIR] [--no-reverse-trick]
    kernelvi compare <report-or-dir> <report-or-dir> ... [--out CSV]
    kernelvi export-plotdata <report.json> [--output DIR]

Exit codes: 0 success, 2 configuration/validation failure, 3 training
aborted on a non-finite objective (partial trace preserved on disk).
The environment variable KERNELVI_OUTPUT_ROOT prepends a root to
relative output directories.
"""

from __future__ import annotations

import argparse
import sys

from .experiments import (ConfigError, ExperimentConfig, compare,
                          export_plotdata, run)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NAN_ABORT = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kernelvi",
                                     description="implicit-VI experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one experiment config")
    p_run.add_argument("config", help="path to the experiment JSON config")
    p_run.add_argument("--output", default=None, help="output directory override")
    p_run.add_argument("--no-reverse-trick", action="store_true",
                       help="estimate the KL without the reverse ratio trick")

    p_cmp = sub.add_parser("compare", help="tabulate metrics across runs")
    p_cmp.add_argument("paths", nargs="+", help="report.json files or run directories")
    p_cmp.add_argument("--out", default=None, help="also write the table as CSV")

    p_exp = sub.add_parser("export-plotdata", help="emit histogram/grid files")
    p_exp.add_argument("report", help="report.json file or run directory")
    p_exp.add_argument("--output", default=None, help="directory for the plot files")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = ExperimentConfig.from_json(args.config)
            if args.no_reverse_trick:
                config.kivi["reverse_trick"] = False
            try:
                report = run(config, output_dir=args.output)
            except RuntimeError as err:
                print(f"error: {err}", file=sys.stderr)
                return EXIT_NAN_ABORT
            print(f"report written to {report.output_dir}/report.json")
            for key, value in sorted(report.metrics.items()):
                print(f"  {key}: {value}")
            return EXIT_OK

        if args.command == "compare":
            _, _, text = compare(args.paths, out_csv=args.out)
            print(text)
            return EXIT_OK

        if args.command == "export-plotdata":
            written = export_plotdata(args.report, outdir=args.output)
            for key, path in sorted(written.items()):
                print(f"{key}: {path}")
            return EXIT_OK
    except (ConfigError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
