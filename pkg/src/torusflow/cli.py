"""Command-line entry point: ``torusflow --config scenario.json --out DIR``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .runner import ConfigError, ExperimentError, emit_report, parse_config, run_scenario

log = logging.getLogger("torusflow")

EXIT_OK, EXIT_PARSE, EXIT_EXPERIMENT, EXIT_IO = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="torusflow", description=__doc__)
    p.add_argument("--config", required=True, type=Path, help="scenario JSON file")
    p.add_argument("--out", type=Path, default=None, help="output directory (overrides config)")
    p.add_argument("--seed", type=int, default=None, help="seed (overrides config)")
    p.add_argument("--max-workers", type=int, default=1,
                   help="worker threads; results do not depend on it")
    p.add_argument("--tolerance", type=float, default=None,
                   help="membership tolerance override")
    p.add_argument("--figures", action="store_true",
                   help="also render PNG figures from the CSV sidecars")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = args.config.read_text()
    except OSError as exc:
        print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
        return EXIT_IO
    overrides = {"seed": args.seed}
    if args.tolerance is not None:
        overrides["tolerances"] = {"membership": args.tolerance}
    if args.out is not None:
        overrides["output"] = str(args.out)
    try:
        scenario = parse_config(text, overrides)
    except ConfigError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    if args.max_workers < 1:
        print("parse error: --max-workers must be at least 1", file=sys.stderr)
        return EXIT_PARSE
    try:
        report = run_scenario(scenario, max_workers=args.max_workers)
    except ExperimentError as exc:
        print(f"experiment error: {exc}", file=sys.stderr)
        return EXIT_EXPERIMENT
    try:
        files = emit_report(report, scenario.output)
        if args.figures:
            from .plotting import render_figures
            files += render_figures(scenario.output)
    except OSError as exc:
        print(f"I/O error writing {scenario.output}: {exc}", file=sys.stderr)
        return EXIT_IO
    for f in files:
        log.info("wrote %s", f)
    print(f"{scenario.kind}: wrote {len(files)} files to {scenario.output} "
          f"in {report.wall_clock_s:.2f} s")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
