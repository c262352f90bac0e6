"""Markdown summary of a result bundle.

Every numeric cell is the raw string from the input CSV, so the summary can
be checksum-verified against its source. Badges compare parsed values
against thresholds supplied by a config file, never constants baked in here.
"""

from __future__ import annotations

import json
import logging
from importlib import resources
from pathlib import Path

from .bundle import MetricsRow, ResultsBundle

log = logging.getLogger("uq_report")

PASS = "✅"
FAIL = "❌"
NA = "—"


def load_thresholds(path: str | Path | None = None) -> dict:
    """Read badge thresholds; defaults ship as package data."""
    if path is None:
        blob = resources.files("uq_report").joinpath(
            "default_thresholds.json").read_text()
    else:
        blob = Path(path).read_text()
    return json.loads(blob)


def _badge(ok: bool) -> str:
    return PASS if ok else FAIL


def _row_badges(row: MetricsRow, thresholds: dict) -> dict[str, str]:
    badges = {}
    if row.has("ece"):
        badges["ece"] = _badge(row.value("ece") <= thresholds["ece_max"])
    if row.has("cov95"):
        badges["cov95"] = _badge(thresholds["cov95_range"][0]
                                 <= row.value("cov95")
                                 <= thresholds["cov95_range"][1])
    if row.has("cov68"):
        badges["cov68"] = _badge(thresholds["cov68_range"][0]
                                 <= row.value("cov68")
                                 <= thresholds["cov68_range"][1])
    if row.has("rmse") and row.has("sigma_obs"):
        limit = thresholds["rmse_sigma_factor"] * float(row.text("sigma_obs"))
        badges["rmse"] = _badge(row.value("rmse") <= limit)
    return badges


def render_summary(bundle: ResultsBundle, out: str | Path,
                   thresholds: dict | None = None) -> Path:
    """Write the markdown summary; returns the output path."""
    if thresholds is None:
        thresholds = load_thresholds()
    out = Path(out)
    lines = ["# Result summary", ""]
    if bundle.source is not None:
        lines += [f"Source bundle: `{bundle.source}`", ""]

    if not bundle.rows:
        lines += ["No metric rows found in the bundle.", ""]
        out.write_text("\n".join(lines))
        return out

    columns = ["id", "regime", "complexity", "n", "ece", "cov68", "cov95",
               "cov99", "rmse", "crps", "nll"]
    columns = [c for c in columns if c in bundle.columns()]
    badge_cols = ["ece", "cov68", "cov95", "rmse"]

    header = columns + [f"{c} ok" for c in badge_cols]
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "|".join(["---"] * len(header)) + "|")
    for row in bundle.rows:
        badges = _row_badges(row, thresholds)
        cells = [row.text(c) or NA for c in columns]
        cells += [badges.get(c, NA) for c in badge_cols]
        lines.append("| " + " | ".join(cells) + " |")
    lines.append("")

    if bundle.baselines:
        lines += ["## External baselines", ""]
        base_cols = [c for c in ("method", "n", "ece", "cov95", "rmse")
                     if c in bundle.baselines[0].raw]
        lines.append("| " + " | ".join(base_cols) + " |")
        lines.append("|" + "|".join(["---"] * len(base_cols)) + "|")
        for row in bundle.baselines:
            lines.append("| " + " | ".join(row.text(c) or NA
                                           for c in base_cols) + " |")
        lines.append("")

    lines += ["## Thresholds", "",
              "```json", json.dumps(thresholds, indent=2, sort_keys=True),
              "```", ""]
    out.write_text("\n".join(lines))
    return out
