"""End-to-end experiment orchestration: generate, train, evaluate, write files.

A single JSON config describes either the three-regime study or the scaling
study. Each configuration produces one row in ``metrics.csv`` (stable column
set, deterministic bytes for a fixed seed) plus a training trace; the full
reports, timings, and eigendecomposition bookkeeping go to ``results.json``.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bench import REGIMES, SCALING_DIMS, RegimeSpec, ScalingSpec, gen_regime, gen_scaling
from .calibration import CSV_COLUMNS, calibration_report
from .training import TrainingAborted, TrainingConfig, train
from .variational import PriorSpec, predict_batch

METRIC_COLUMNS = ["id", "experiment", "regime", "complexity", "n", "seed",
                  "n_train", "n_test", "sigma_obs", "delta_min",
                  "rmse", "mae", "r2", "max_error"] + CSV_COLUMNS


class ConfigError(ValueError):
    """The experiment config is malformed."""


@dataclass
class ExperimentResult:
    rows: list[dict] = field(default_factory=list)
    reports: dict[str, dict] = field(default_factory=dict)
    errors: list[dict] = field(default_factory=list)
    wall_time: float = 0.0
    eig_success: int = 0
    eig_attempted: int = 0

    @property
    def ok(self) -> bool:
        return not self.errors


def accuracy_metrics(predictions, y_true) -> dict[str, float]:
    """RMSE / MAE / R^2 / max absolute error over flattened eigenvalues."""
    mean = np.concatenate([np.asarray(p.mean) for p in predictions])
    y = np.concatenate([np.asarray(row, dtype=np.float64) for row in y_true])
    err = mean - y
    ss_res = float(np.sum(err * err))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return {
        "rmse": float(np.sqrt(np.mean(err * err))),
        "mae": float(np.mean(np.abs(err))),
        "r2": 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan"),
        "max_error": float(np.max(np.abs(err))),
    }


def validate_config(config: dict) -> dict:
    """Check the experiment config; returns it with defaults applied."""
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    kind = config.get("experiment")
    if kind not in ("regimes", "scaling"):
        raise ConfigError(f"experiment must be 'regimes' or 'scaling', got {kind!r}")
    cfg = dict(config)
    cfg.setdefault("seed", 0)
    training = cfg.get("training", {})
    if not isinstance(training, dict):
        raise ConfigError("training section must be an object")
    try:
        TrainingConfig.from_json(training)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid training section: {exc}") from exc
    if kind == "regimes":
        cfg.setdefault("n", 8)
        cfg.setdefault("n_problems", 600)
        cfg.setdefault("split", [400, 200])
        cfg.setdefault("regimes", list(REGIMES))
        cfg.setdefault("seeds", [cfg["seed"]])
        for r in cfg["regimes"]:
            if r not in REGIMES:
                raise ConfigError(f"unknown regime '{r}'")
        if sum(cfg["split"]) != cfg["n_problems"]:
            raise ConfigError("split must sum to n_problems")
    else:
        cfg.setdefault("dims", [5, 20, 50])
        cfg.setdefault("complexities", [1, 4, 6])
        cfg.setdefault("samples", 60)
        for n in cfg["dims"]:
            if n not in SCALING_DIMS:
                raise ConfigError(f"dimension {n} not in the scaling catalog {SCALING_DIMS}")
        for c in cfg["complexities"]:
            if not 1 <= int(c) <= 6:
                raise ConfigError(f"complexity {c} outside 1..6")
    return cfg


def _configurations(cfg: dict):
    if cfg["experiment"] == "regimes":
        for regime in cfg["regimes"]:
            for seed in cfg["seeds"]:
                spec = RegimeSpec(regime=regime, n=cfg["n"],
                                  n_problems=cfg["n_problems"],
                                  split=tuple(cfg["split"]), seed=int(seed))
                yield f"{regime}_n{cfg['n']}_s{seed}", spec
    else:
        for n in cfg["dims"]:
            for c in cfg["complexities"]:
                spec = ScalingSpec(n=int(n), complexity=int(c),
                                   samples=int(cfg["samples"]),
                                   seed=int(cfg["seed"]))
                yield f"scaling_n{n}_c{c}", spec


def run_configuration(spec, training: TrainingConfig):
    """Generate, train, and evaluate one configuration.

    Returns (metrics row dict, report, trace, metadata).
    """
    generate = gen_regime if isinstance(spec, RegimeSpec) else gen_scaling
    model, train_set, test_set, meta = generate(spec)
    training = TrainingConfig.from_json({**training.to_json(),
                                         "sigma_obs": meta["sigma_obs"],
                                         "seed": meta["seed"]})
    prior = PriorSpec.default(model.n_corrections)
    posterior, trace = train(model, train_set, prior, training)
    predictions = predict_batch(posterior, model, test_set.x, meta["sigma_obs"],
                                n_samples=training.mc_samples,
                                seed=training.seed + 0x5EED)
    report = calibration_report(predictions, test_set.y)
    acc = accuracy_metrics(predictions, test_set.y)

    row = {
        "experiment": meta["kind"],
        "regime": meta.get("regime", ""),
        "complexity": meta.get("complexity", ""),
        "n": meta["n"],
        "seed": meta["seed"],
        "n_train": len(train_set),
        "n_test": len(test_set),
        "sigma_obs": meta["sigma_obs"],
        "delta_min": meta["delta_min"],
        **acc,
        **report.csv_row(),
    }
    return row, report, trace, meta, posterior


def metrics_csv(rows: list[dict]) -> str:
    """Render metric rows with a stable column set and float repr."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    for row in rows:
        out = []
        for col in METRIC_COLUMNS:
            val = row.get(col, "")
            out.append(repr(val) if isinstance(val, float) else val)
        writer.writerow(out)
    return buf.getvalue()


def run_experiment(config: dict, output_dir: str | Path) -> ExperimentResult:
    """Run every configuration in the config; write results files.

    Failures in one configuration are recorded and the remaining
    configurations still run; callers should treat a result with errors as a
    nonzero-exit condition.
    """
    cfg = validate_config(config)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    training = TrainingConfig.from_json(cfg.get("training", {}))

    # Externally supplied baseline rows (GP / ensembles / forests) are only
    # ever ingested, never computed here; they ride along for comparison.
    baselines = cfg.get("baselines")
    if baselines:
        src = Path(baselines)
        if not src.is_file():
            raise ConfigError(f"baselines file not found: {baselines}")
        (out / "baselines.csv").write_text(src.read_text())

    result = ExperimentResult()
    t_start = time.perf_counter()
    for cid, spec in _configurations(cfg):
        t0 = time.perf_counter()
        result.eig_attempted += 1
        try:
            row, report, trace, meta, posterior = run_configuration(spec, training)
        except (TrainingAborted, Exception) as exc:  # noqa: BLE001 - recorded, not hidden
            result.errors.append({"id": cid, "error": str(exc),
                                  "type": type(exc).__name__})
            continue
        result.eig_success += 1
        row = {"id": cid, **row}
        result.rows.append(row)
        result.reports[cid] = {
            "metadata": meta,
            "report": report.to_json(),
            "accuracy": {k: row[k] for k in ("rmse", "mae", "r2", "max_error")},
            "posterior": posterior.to_json(),
            "epochs_run": len(trace),
            "best_epoch": trace.best_epoch,
            "converged": trace.converged,
            "wall_time": time.perf_counter() - t0,
        }
        trace.save(out, stem=f"trace_{cid}")
    result.wall_time = time.perf_counter() - t_start

    (out / "metrics.csv").write_text(metrics_csv(result.rows))
    (out / "results.json").write_text(json.dumps({
        "config": cfg,
        "rows": result.rows,
        "reports": result.reports,
        "errors": result.errors,
        "wall_time": result.wall_time,
        "eigendecomposition": {"succeeded": result.eig_success,
                               "attempted": result.eig_attempted},
    }, sort_keys=True, default=str))
    return result
