import json
import subprocess
import sys

import numpy as np
import pytest


def run_cli(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "spectral_uq.cli", *args],
                          capture_output=True, text=True, cwd=cwd)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Generate a small regime dataset and train a quick posterior."""
    root = tmp_path_factory.mktemp("cli")
    gen_cfg = root / "gen.json"
    gen_cfg.write_text(json.dumps({
        "generator": "regime", "regime": "well_separated", "n": 6,
        "n_problems": 40, "split": [30, 10], "seed": 7}))
    data_dir = root / "data"
    res = run_cli("generate", "--config", str(gen_cfg), "--output", str(data_dir))
    assert res.returncode == 0, res.stderr

    train_cfg = root / "train.json"
    train_cfg.write_text(json.dumps({
        "model": str(data_dir / "model.json"),
        "train": str(data_dir / "train.json"),
        "metadata": str(data_dir / "metadata.json"),
        "training": {"epochs": 5, "mc_samples": 10, "seed": 7}}))
    fit_dir = root / "fit"
    res = run_cli("train", "--config", str(train_cfg), "--output", str(fit_dir))
    assert res.returncode == 0, res.stderr
    return root, data_dir, fit_dir


class TestGenerate:
    def test_writes_four_files_with_metadata(self, workspace):
        _, data_dir, _ = workspace
        for name in ("model.json", "train.json", "test.json", "metadata.json"):
            assert (data_dir / name).is_file()
        meta = json.loads((data_dir / "metadata.json").read_text())
        assert "delta_min" in meta and meta["delta_min"] > 0

    def test_invalid_regime_exits_2(self, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"generator": "regime", "regime": "diagonal",
                                   "n": 6}))
        res = run_cli("generate", "--config", str(cfg), "--output", str(tmp_path / "o"))
        assert res.returncode == 2

    def test_missing_config_exits_2(self, tmp_path):
        res = run_cli("generate", "--config", str(tmp_path / "nope.json"))
        assert res.returncode == 2

    def test_byte_identical_reruns(self, tmp_path):
        cfg = tmp_path / "g.json"
        cfg.write_text(json.dumps({"generator": "scaling", "n": 5,
                                   "complexity": 2, "samples": 40, "seed": 3}))
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run_cli("generate", "--config", str(cfg), "--output", str(out1)).returncode == 0
        assert run_cli("generate", "--config", str(cfg), "--output", str(out2)).returncode == 0
        for name in ("model.json", "train.json", "test.json", "metadata.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


class TestTrain:
    def test_outputs(self, workspace):
        _, _, fit_dir = workspace
        assert (fit_dir / "posterior.json").is_file()
        post = json.loads((fit_dir / "posterior.json").read_text())
        assert set(post) == {"mean", "lowrank", "diag_var", "log_alpha_reg"}
        rows = (fit_dir / "trace.csv").read_text().strip().splitlines()
        assert len(rows) == 5 + 1             # header + one row per epoch

    def test_missing_dataset_exits_2(self, workspace, tmp_path):
        root, data_dir, _ = workspace
        cfg = tmp_path / "t.json"
        cfg.write_text(json.dumps({"model": str(data_dir / "model.json"),
                                   "train": str(tmp_path / "missing.json"),
                                   "training": {"epochs": 2}}))
        res = run_cli("train", "--config", str(cfg), "--output", str(tmp_path / "o"))
        assert res.returncode == 2

    def test_numerical_abort_exits_3_with_trace(self, workspace, tmp_path):
        # A vanishing noise scale overflows the Gaussian likelihood, so the
        # objective turns non-finite and training aborts; the trace is still
        # written.
        _, data_dir, _ = workspace
        cfg = tmp_path / "t.json"
        cfg.write_text(json.dumps({
            "model": str(data_dir / "model.json"),
            "train": str(data_dir / "train.json"),
            "training": {"epochs": 3, "mc_samples": 5, "sigma_obs": 1e-160}}))
        out = tmp_path / "o"
        res = run_cli("train", "--config", str(cfg), "--output", str(out))
        assert res.returncode == 3
        assert (out / "trace.csv").is_file()
        assert not (out / "posterior.json").exists()


class TestEvaluate:
    def _eval_cfg(self, workspace, tmp_path, **extra):
        _, data_dir, fit_dir = workspace
        cfg = tmp_path / "eval.json"
        cfg.write_text(json.dumps({
            "model": str(data_dir / "model.json"),
            "posterior": str(fit_dir / "posterior.json"),
            "test": str(data_dir / "test.json"),
            "metadata": str(data_dir / "metadata.json"),
            "mc_samples": 10, "seed": 1, **extra}))
        return cfg

    def test_metrics_columns(self, workspace, tmp_path):
        cfg = self._eval_cfg(workspace, tmp_path)
        out = tmp_path / "out"
        res = run_cli("evaluate", "--config", str(cfg), "--output", str(out))
        assert res.returncode == 0, res.stderr
        header = (out / "metrics.csv").read_text().splitlines()[0].split(",")
        for col in ("ece", "cov95", "rmse"):
            assert col in header

    def test_full_flag_extends_results_not_metrics(self, workspace, tmp_path):
        cfg = self._eval_cfg(workspace, tmp_path)
        lean, full = tmp_path / "lean", tmp_path / "full"
        assert run_cli("evaluate", "--config", str(cfg), "--output", str(lean)).returncode == 0
        assert run_cli("evaluate", "--config", str(cfg), "--output", str(full),
                       "--full").returncode == 0
        assert (lean / "metrics.csv").read_bytes() == (full / "metrics.csv").read_bytes()
        lean_size = len((lean / "results.json").read_bytes())
        full_size = len((full / "results.json").read_bytes())
        assert full_size > 1.5 * lean_size
        blob = json.loads((full / "results.json").read_text())
        assert "predictions" in blob

    def test_shape_mismatch_exits_2(self, workspace, tmp_path):
        _, data_dir, fit_dir = workspace
        bad_test = tmp_path / "bad_test.json"
        bad_test.write_text(json.dumps({"x": [[0.0, 0.0]], "y": [[1.0, 2.0]]}))
        cfg = tmp_path / "eval.json"
        cfg.write_text(json.dumps({
            "model": str(data_dir / "model.json"),
            "posterior": str(fit_dir / "posterior.json"),
            "test": str(bad_test), "sigma_obs": 0.01}))
        res = run_cli("evaluate", "--config", str(cfg), "--output", str(tmp_path / "o"))
        assert res.returncode == 2


class TestPropagate:
    def test_diagonal_toy_well_separated(self, tmp_path):
        model = {"n": 3,
                 "base": {"n": 3, "rows": np.diag([0.0, 1.0, 2.0]).tolist()},
                 "couplings": [],
                 "corrections": [{"n": 3, "rows": np.eye(3).tolist()}]}
        (tmp_path / "model.json").write_text(json.dumps(model))
        cfg = tmp_path / "p.json"
        cfg.write_text(json.dumps({"model": str(tmp_path / "model.json"),
                                   "cov_w": [[1e-8]], "tau_num": 1e-10,
                                   "n_data": 1000000}))
        res = run_cli("propagate", "--config", str(cfg), "--output", str(tmp_path))
        assert res.returncode == 0, res.stderr
        blob = json.loads((tmp_path / "uncertainty.json").read_text())
        assert all(r == "well_separated" for r in blob["regimes"])
        assert blob["reliability"] == 1.0
        assert "Uncertainty estimates may be unreliable" not in res.stdout

    def test_low_reliability_prints_warning(self, tmp_path):
        model = {"n": 3,
                 "base": {"n": 3, "rows": np.diag([0.0, 0.05, 0.1]).tolist()},
                 "couplings": [],
                 "corrections": [{"n": 3, "rows": np.eye(3).tolist()}]}
        (tmp_path / "model.json").write_text(json.dumps(model))
        cfg = tmp_path / "p.json"
        cfg.write_text(json.dumps({"model": str(tmp_path / "model.json"),
                                   "cov_w": [[0.04]], "tau_num": 1e-12,
                                   "n_data": 1000000, "cluster_scale": 0.0}))
        res = run_cli("propagate", "--config", str(cfg), "--output", str(tmp_path))
        assert res.returncode == 0
        assert "Uncertainty estimates may be unreliable" in res.stdout

    def test_malformed_covariance_exits_2(self, tmp_path):
        model = {"n": 2, "base": {"n": 2, "rows": [[0.0, 0.0], [0.0, 1.0]]},
                 "couplings": [],
                 "corrections": [{"n": 2, "rows": [[1.0, 0.0], [0.0, 1.0]]}]}
        (tmp_path / "model.json").write_text(json.dumps(model))
        cfg = tmp_path / "p.json"
        cfg.write_text(json.dumps({"model": str(tmp_path / "model.json"),
                                   "cov_w": [[1.0, 2.0], [2.0, 1.0]]}))
        res = run_cli("propagate", "--config", str(cfg), "--output", str(tmp_path))
        assert res.returncode == 2


class TestScore:
    def test_recommended_band_printed(self, tmp_path):
        res = run_cli("score", "--n-data", "10000", "--dim", "50",
                      "--delta", "0.1", "--eps", "0.0001", "--kappa", "10000",
                      "--pnorm", "1.0", "--sigma", "0.01")
        assert res.returncode == 0
        assert "recommended" in res.stdout

    def test_small_n_feasibility_false(self, tmp_path):
        res = run_cli("score", "--n-data", "10000", "--dim", "5",
                      "--delta", "0.1", "--eps", "0.0001", "--kappa", "10000")
        assert res.returncode == 0
        assert "feasibility.scale: False" in res.stdout

    def test_json_output_parses(self, tmp_path):
        res = run_cli("score", "--n-data", "10000", "--dim", "50",
                      "--delta", "0.1", "--eps", "0.0001", "--kappa", "10000",
                      "--output", str(tmp_path))
        assert res.returncode == 0
        blob = json.loads((tmp_path / "score.json").read_text())
        assert set(blob) == {"score", "recommendation", "feasibility"}
        assert set(blob["feasibility"]) >= {"scale", "data", "spectral",
                                            "numerical", "signal", "overall"}

    def test_invalid_kappa_exits_2(self):
        res = run_cli("score", "--n-data", "100", "--dim", "50",
                      "--delta", "0.1", "--eps", "0.01", "--kappa", "0.5")
        assert res.returncode == 2


class TestBench:
    def test_small_bench_deterministic_csv(self, tmp_path):
        cfg = tmp_path / "bench.json"
        cfg.write_text(json.dumps({
            "experiment": "regimes", "n": 5, "n_problems": 30,
            "split": [20, 10], "regimes": ["well_separated"], "seeds": [1],
            "training": {"epochs": 3, "mc_samples": 10}}))
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert run_cli("bench", "--config", str(cfg), "--output", str(out1)).returncode == 0
        assert run_cli("bench", "--config", str(cfg), "--output", str(out2)).returncode == 0
        assert (out1 / "metrics.csv").read_bytes() == (out2 / "metrics.csv").read_bytes()
        rows = (out1 / "metrics.csv").read_text().strip().splitlines()
        assert len(rows) == 2
        assert (out1 / "results.json").is_file()

    def test_invalid_experiment_exits_2(self, tmp_path):
        cfg = tmp_path / "bench.json"
        cfg.write_text(json.dumps({"experiment": "nonsense"}))
        res = run_cli("bench", "--config", str(cfg), "--output", str(tmp_path / "o"))
        assert res.returncode == 2
