"""Batch report generation: read a bundle directory, write figures + summary."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .bundle import load_bundle
from .figures import render_decomposition, render_reliability, render_scaling
from .summary import load_thresholds, render_summary

log = logging.getLogger("uq_report")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="uq-report",
        description="Render figures and a markdown summary from a results bundle")
    parser.add_argument("bundle", help="directory with metrics.csv / results.json")
    parser.add_argument("--output", default="report_out", help="output directory")
    parser.add_argument("--thresholds", default=None,
                        help="JSON file with badge thresholds")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s")

    bundle = load_bundle(args.bundle)
    if bundle.empty:
        log.warning("bundle %s holds no rows or samples; nothing to render",
                    args.bundle)
        return 0
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)

    written = []
    path = render_reliability(bundle, out / "reliability.png")
    if path:
        written.append(path)
    written += render_scaling(bundle, out)
    path = render_decomposition(bundle, out / "uncertainty_decomposition.png")
    if path:
        written.append(path)
    thresholds = load_thresholds(args.thresholds)
    written.append(render_summary(bundle, out / "summary.md", thresholds))

    for p in written:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
