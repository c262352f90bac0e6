"""Result-bundle loading.

A bundle directory is whatever the upstream CLI wrote: ``metrics.csv``
(required for most renders), optionally ``results.json`` with per-sample
predictive records, and optionally ``baselines.csv`` with externally supplied
comparison rows (a ``method`` column distinguishes them).

Metric cells are kept as the raw CSV strings; the renderer quotes them
verbatim so every number in the report can be traced back to the input file
byte for byte. Parse on demand with :meth:`MetricsRow.value`.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

log = logging.getLogger("uq_report")

REQUIRED_COLUMNS = ("ece", "cov68", "cov95", "cov99", "rmse", "n")


@dataclass
class MetricsRow:
    raw: dict[str, str]
    method: str = "spectral-uq"

    def value(self, column: str) -> float:
        return float(self.raw[column])

    def text(self, column: str) -> str:
        return self.raw.get(column, "")

    def has(self, column: str) -> bool:
        return bool(self.raw.get(column, "").strip())


@dataclass
class SampleRecord:
    """One held-out prediction: moments plus the observed eigenvalues."""

    mean: list[float]
    total_var: list[float]
    epistemic_var: list[float]
    aleatoric_var: float
    observed: list[float]


@dataclass
class ResultsBundle:
    rows: list[MetricsRow] = field(default_factory=list)
    baselines: list[MetricsRow] = field(default_factory=list)
    samples: list[SampleRecord] = field(default_factory=list)
    source: Path | None = None

    @property
    def empty(self) -> bool:
        return not self.rows and not self.samples

    def columns(self) -> list[str]:
        return list(self.rows[0].raw.keys()) if self.rows else []

    def all_rows(self) -> list[MetricsRow]:
        return self.rows + self.baselines


def _read_csv(path: Path, method: str | None) -> list[MetricsRow]:
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            m = raw.get("method") or method or "spectral-uq"
            rows.append(MetricsRow(raw={k: (v or "") for k, v in raw.items()},
                                   method=m))
    return rows


def _samples_from_results(blob: dict) -> list[SampleRecord]:
    preds = blob.get("predictions")
    obs = blob.get("observations")
    if not preds or not obs or len(preds) != len(obs):
        return []
    records = []
    for p, y in zip(preds, obs):
        records.append(SampleRecord(
            mean=p["mean"], total_var=p["total_var"],
            epistemic_var=p.get("epistemic_var", []),
            aleatoric_var=float(p.get("aleatoric_var", 0.0)),
            observed=y))
    return records


def load_bundle(directory: str | Path) -> ResultsBundle:
    """Read metrics, baselines, and per-sample records from a directory."""
    directory = Path(directory)
    bundle = ResultsBundle(source=directory)

    metrics = directory / "metrics.csv"
    if metrics.is_file():
        bundle.rows = _read_csv(metrics, method=None)
        missing = [c for c in REQUIRED_COLUMNS
                   if bundle.rows and c not in bundle.rows[0].raw]
        if missing:
            log.warning("metrics.csv is missing columns %s; dependent plots "
                        "will be skipped", missing)
    else:
        log.warning("no metrics.csv in %s", directory)

    baselines = directory / "baselines.csv"
    if baselines.is_file():
        bundle.baselines = _read_csv(baselines, method="baseline")

    results = directory / "results.json"
    if results.is_file():
        try:
            blob = json.loads(results.read_text())
        except json.JSONDecodeError as exc:
            log.warning("results.json unreadable: %s", exc)
        else:
            bundle.samples = _samples_from_results(blob)
    return bundle
