"""Command-line interface.

    minisph CASE [options]          run a benchmark case
    minisph aggregate R1.csv ...    plot runtime/GPIPS across run reports

CASE is dambreak2d, dambreak3d-obstacle, hydrostatic, or a path to a flat
``key = value`` config file.
"""

from __future__ import annotations

import argparse
import importlib.resources
import sys

from .cases import CaseConfig, load_config, parse_config_text
from .report import aggregate_reports, run_simulation


def _base_config(case):
    if case == "dambreak2d":
        return CaseConfig(case="dambreak2d")
    if case == "hydrostatic":
        return CaseConfig(case="hydrostatic", tank=(1.0, 1.2),
                          column=(1.0, 1.0), dp=0.02, hydrostatic_init=True,
                          probes=((0.5, 0.75), (0.5, 0.5), (0.5, 0.25)))
    if case == "dambreak3d-obstacle":
        text = (importlib.resources.files("minisph") / "data"
                / "kleefsman.cfg").read_text()
        return CaseConfig(**parse_config_text(text))
    return load_config(case)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="minisph",
        description="Miniature weakly-compressible SPH benchmark harness")
    parser.add_argument("case",
                        help="dambreak2d | dambreak3d-obstacle | hydrostatic "
                             "| config file path | aggregate")
    parser.add_argument("inputs", nargs="*",
                        help="report CSVs (aggregate mode only)")
    parser.add_argument("--policy", choices=("seq", "par", "device"))
    parser.add_argument("--workers", type=int)
    parser.add_argument("--precision", choices=("f32", "f64"))
    parser.add_argument("--dp", type=float)
    parser.add_argument("--end-time", type=float)
    parser.add_argument("--sort-every", type=int)
    parser.add_argument("--out")
    parser.add_argument("--snapshots", type=int)
    parser.add_argument("--report", choices=("csv", "text"))
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    if args.case == "aggregate":
        if not args.inputs:
            print("aggregate mode needs at least one report CSV",
                  file=sys.stderr)
            return 2
        outputs = aggregate_reports(args.inputs, args.out or "out")
        for path in outputs:
            print(path)
        return 0
    config = _base_config(args.case)
    if args.policy is not None:
        config.policy = args.policy
    if args.workers is not None:
        config.workers = args.workers
    if args.precision is not None:
        config.precision = args.precision
    if args.dp is not None:
        config.dp = args.dp
    if args.end_time is not None:
        config.end_time = args.end_time
    if args.sort_every is not None:
        config.sort_every = args.sort_every
    if args.out is not None:
        config.out_dir = args.out
    if args.snapshots is not None:
        config.snapshots = args.snapshots
    if args.report is not None:
        config.report_format = args.report
    report = run_simulation(config)
    if config.report_format == "csv":
        row = report.csv_row()
        print(",".join(str(row[k]) for k in report.CSV_FIELDS))
    else:
        print(report.text(), end="")
    return 1 if report.aborted else 0


if __name__ == "__main__":
    sys.exit(main())
