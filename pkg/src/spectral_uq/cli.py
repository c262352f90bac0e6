"""File-based command-line workflows: generate, train, predict, propagate,
evaluate, score, bench.

Exit codes: 0 success, 2 input/config error, 3 numerical failure. Every
command is a deterministic function of (config, seed); see docs/config.md
for the config schemas.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bench import (RegimeSpec, ScalingSpec, feasibility_check, deployment_score,
                    gen_regime, gen_scaling)
from .calibration import calibration_report
from .experiment import (ConfigError, accuracy_metrics, metrics_csv,
                         run_experiment, validate_config)
from .matrices import load_model, save_model
from .perturbation import UNRELIABLE_MESSAGE, propagate_adaptive
from .training import TrainingAborted, TrainingConfig, train
from .variational import Dataset, PriorSpec, VariationalPosterior, predict_batch

log = logging.getLogger("spectral_uq")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_CONFIG):
        super().__init__(message)
        self.code = code


def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"config file not found: {path}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise CliError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise CliError("config must be a JSON object")
    return cfg


def _require(cfg: dict, key: str, kind=None):
    if key not in cfg:
        raise CliError(f"config is missing required field '{key}'")
    if kind is not None and not isinstance(cfg[key], kind):
        raise CliError(f"config field '{key}' has the wrong type")
    return cfg[key]


def _out_dir(args) -> Path:
    out = Path(args.output or ".")
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise CliError(f"output directory not writable: {exc}") from exc
    return out


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True))


def cmd_generate(args) -> int:
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    gen = cfg.get("generator")
    try:
        if gen == "regime":
            spec = RegimeSpec(regime=_require(cfg, "regime", str), n=int(_require(cfg, "n")),
                              n_problems=int(cfg.get("n_problems", 600)),
                              split=tuple(cfg.get("split", (400, 200))),
                              seed=int(cfg.get("seed", 0)))
            model, train_set, test_set, meta = gen_regime(spec)
        elif gen == "scaling":
            spec = ScalingSpec(n=int(_require(cfg, "n")),
                               complexity=int(_require(cfg, "complexity")),
                               samples=int(cfg.get("samples", 60)),
                               seed=int(cfg.get("seed", 0)))
            model, train_set, test_set, meta = gen_scaling(spec)
        else:
            raise CliError(f"generator must be 'regime' or 'scaling', got {gen!r}")
    except ValueError as exc:
        raise CliError(f"invalid generator spec: {exc}") from exc

    out = _out_dir(args)
    save_model(model, out / "model.json")
    train_set.save(out / "train.json")
    test_set.save(out / "test.json")
    _dump(out / "metadata.json", meta)
    log.info("wrote model.json train.json test.json metadata.json to %s", out)
    return EXIT_OK


def _training_config(cfg: dict, args) -> TrainingConfig:
    section = dict(cfg.get("training", {}))
    if "sigma_obs" not in section:
        meta_path = cfg.get("metadata")
        if meta_path:
            meta = json.loads(Path(meta_path).read_text())
            section["sigma_obs"] = meta["sigma_obs"]
    if args.seed is not None:
        section["seed"] = args.seed
    try:
        return TrainingConfig.from_json(section)
    except ValueError as exc:
        raise CliError(f"invalid training config: {exc}") from exc


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    model_path = Path(_require(cfg, "model", str))
    data_path = Path(_require(cfg, "train", str))
    if not model_path.is_file() or not data_path.is_file():
        raise CliError("model or training dataset file missing")
    model = load_model(model_path)
    dataset = Dataset.load(data_path)
    training = _training_config(cfg, args)
    prior_cfg = cfg.get("prior", {})
    prior = PriorSpec.default(model.n_corrections, scale=float(prior_cfg.get("scale", 0.2)))

    out = _out_dir(args)
    try:
        posterior, trace = train(model, dataset, prior, training)
    except TrainingAborted as exc:
        exc.trace.save(out)
        log.error("training aborted: %s", exc)
        return EXIT_NUMERICAL
    except ValueError as exc:
        raise CliError(f"invalid training problem: {exc}") from exc
    posterior.save(out / "posterior.json")
    trace.save(out)
    log.info("trained %d epochs (best %d, converged=%s)", len(trace),
             trace.best_epoch, trace.converged)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_config(args.config)
    model = load_model(Path(_require(cfg, "model", str)))
    posterior = VariationalPosterior.load(Path(_require(cfg, "posterior", str)))
    test_set = Dataset.load(Path(_require(cfg, "test", str)))
    meta = {}
    if cfg.get("metadata"):
        meta = json.loads(Path(cfg["metadata"]).read_text())
    sigma_obs = float(cfg.get("sigma_obs", meta.get("sigma_obs", 0.0)))
    if sigma_obs <= 0.0:
        raise CliError("sigma_obs must be provided (config or metadata) and positive")
    if test_set.y.shape[1] != model.n:
        raise CliError(f"test set eigenvalue count {test_set.y.shape[1]} != model n {model.n}")

    n_samples = int(cfg.get("mc_samples", 25))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    try:
        predictions = predict_batch(posterior, model, test_set.x, sigma_obs,
                                    n_samples=n_samples, seed=seed)
        report = calibration_report(predictions, test_set.y)
    except Exception as exc:
        log.error("evaluation failed: %s", exc)
        return EXIT_NUMERICAL
    acc = accuracy_metrics(predictions, test_set.y)

    row = {"id": cfg.get("id", "evaluate"), "experiment": meta.get("kind", ""),
           "regime": meta.get("regime", ""), "complexity": meta.get("complexity", ""),
           "n": model.n, "seed": seed, "n_train": meta.get("split", ["", ""])[0],
           "n_test": len(test_set), "sigma_obs": sigma_obs,
           "delta_min": meta.get("delta_min", ""), **acc, **report.csv_row()}
    out = _out_dir(args)
    (out / "metrics.csv").write_text(metrics_csv([row]))
    results = {"report": report.to_json(), "accuracy": acc, "metadata": meta}
    if args.full:
        results["predictions"] = [p.to_json() for p in predictions]
        results["observations"] = test_set.y.tolist()
    _dump(out / "results.json", results)
    log.info("evaluate: ece=%.4f cov95=%.3f rmse=%.4g", report.ece,
             report.coverage[0.95], acc["rmse"])
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg = _load_config(args.config)
    model = load_model(Path(_require(cfg, "model", str)))
    posterior = VariationalPosterior.load(Path(_require(cfg, "posterior", str)))
    x = np.atleast_2d(np.asarray(_require(cfg, "x", list), dtype=np.float64))
    sigma_obs = float(cfg.get("sigma_obs", 0.0))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    try:
        predictions = predict_batch(posterior, model, x, sigma_obs,
                                    n_samples=int(cfg.get("mc_samples", 25)),
                                    seed=seed)
    except Exception as exc:
        log.error("prediction failed: %s", exc)
        return EXIT_NUMERICAL
    out = _out_dir(args)
    _dump(out / "predictions.json", [p.to_json() for p in predictions])
    return EXIT_OK


def cmd_propagate(args) -> int:
    cfg = _load_config(args.config)
    model = load_model(Path(_require(cfg, "model", str)))
    cov = np.asarray(_require(cfg, "cov_w", list), dtype=np.float64)
    tau_num = float(cfg.get("tau_num", 1e-10))
    n_data = int(cfg.get("n_data", 1000))
    try:
        x = np.asarray(cfg.get("x", [0.0] * model.n_inputs), dtype=np.float64)
        from .matrices import assemble
        p = assemble(model, x, np.zeros(model.n_corrections))
        result = propagate_adaptive(p, model, cov, tau_num, n_data,
                                    cluster_scale=float(cfg.get("cluster_scale", 1.0)))
    except ValueError as exc:
        raise CliError(f"invalid propagation inputs: {exc}") from exc
    except Exception as exc:
        log.error("propagation failed: %s", exc)
        return EXIT_NUMERICAL
    out = _out_dir(args)
    (out / "uncertainty.json").write_text(result.to_json_str())
    if result.warning:
        print(UNRELIABLE_MESSAGE)
    return EXIT_OK


def cmd_score(args) -> int:
    try:
        score, band = deployment_score(args.n_data, args.dim, args.delta,
                                       args.eps, args.kappa)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    gaps = ([float(g) for g in args.gaps.split(",")] if args.gaps
            else [args.delta])
    verdict = feasibility_check(args.dim, args.n_data, gaps,
                                p_norm=args.pnorm, kappa=args.kappa,
                                sigma=args.sigma)
    payload = {"score": score, "recommendation": band,
               "feasibility": verdict.to_json()}
    print(f"deployment score: {score:.4g} -> {band}")
    for name in ("scale", "data", "spectral", "numerical", "signal"):
        print(f"feasibility.{name}: {getattr(verdict, name)}")
    if args.output:
        out = _out_dir(args)
        _dump(out / "score.json", payload)
    else:
        print(json.dumps(payload, sort_keys=True))
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    try:
        cfg = validate_config(cfg)
    except ConfigError as exc:
        raise CliError(str(exc)) from exc
    out = _out_dir(args) if args.output else Path(cfg.get("output_dir", "."))
    result = run_experiment(cfg, out)
    log.info("bench: %d configurations, %d errors, %.1fs",
             len(result.rows) + len(result.errors), len(result.errors),
             result.wall_time)
    if not result.ok:
        for err in result.errors:
            log.error("configuration %s failed: %s", err["id"], err["error"])
        return EXIT_NUMERICAL
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "predict": cmd_predict,
    "propagate": cmd_propagate,
    "evaluate": cmd_evaluate,
    "score": cmd_score,
    "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spectral-uq",
        description="Uncertainty quantification for parametric eigenvalue problems")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        if config_required:
            p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--output", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--full", action="store_true",
                       help="include per-sample records in results.json")
        p.add_argument("-v", "--verbose", action="count", default=0)

    for name in ("generate", "train", "predict", "propagate", "evaluate", "bench"):
        common(sub.add_parser(name))
    score = sub.add_parser("score")
    common(score, config_required=False)
    score.add_argument("--n-data", type=int, required=True, dest="n_data")
    score.add_argument("--dim", type=int, required=True)
    score.add_argument("--delta", type=float, required=True)
    score.add_argument("--eps", type=float, required=True)
    score.add_argument("--kappa", type=float, required=True)
    score.add_argument("--pnorm", type=float, default=1.0)
    score.add_argument("--sigma", type=float, default=0.0)
    score.add_argument("--gaps", type=str, default=None,
                       help="comma-separated gap sample for the feasibility check")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        log.error("%s", exc)
        return exc.code
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        log.error("invalid input: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
