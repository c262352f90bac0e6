"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line. Run with ``pytest tests/test_acceptance.py -v -s``.

The heavyweight protocol replications carry their stated wall-clock budgets
as assertions.
"""

import math
import time

import numpy as np
import pytest

import spectral_uq as suq
from spectral_uq.experiment import run_experiment
from spectral_uq.training import TrainingConfig, TrainingTrace, monitor_step


def report(name: str, ok: bool, detail: str = "") -> None:
    print(f"[ACCEPTANCE] {name}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"{name}: {detail}"


def test_regime_replication_small(tmp_path):
    """Three regimes at n=8, 300/100, seeds 1..5: median ECE <= 0.05 per
    regime, median cov95 in [0.90, 0.99], median cov68 in [0.58, 0.78],
    under 5 minutes."""
    t0 = time.perf_counter()
    result = run_experiment({
        "experiment": "regimes", "n": 8, "n_problems": 400,
        "split": [300, 100], "seeds": [1, 2, 3, 4, 5],
        "training": {"epochs": 100, "mc_samples": 25},
    }, tmp_path)
    elapsed = time.perf_counter() - t0
    assert result.ok, result.errors

    lines = []
    ok = True
    for regime in ("well_separated", "near_degenerate", "critical_gap"):
        rows = [r for r in result.rows if r["regime"] == regime]
        assert len(rows) == 5
        med_ece = float(np.median([r["ece"] for r in rows]))
        med_c95 = float(np.median([r["cov95"] for r in rows]))
        med_c68 = float(np.median([r["cov68"] for r in rows]))
        ok &= med_ece <= 0.05 and 0.90 <= med_c95 <= 0.99 and 0.58 <= med_c68 <= 0.78
        lines.append(f"{regime}: ece={med_ece:.4f} cov95={med_c95:.3f} "
                     f"cov68={med_c68:.3f}")
    ok &= elapsed <= 300.0
    report("regime replication n=8 (5 seeds)", ok,
           f"{'; '.join(lines)}; {elapsed:.0f}s")


def test_regime_replication_scale(tmp_path):
    """Three regimes at n=50, 400/200, one seed: RMSE <= 2 sigma_obs,
    ECE <= 0.05, cov95 in [0.90, 0.99], under 30 minutes."""
    t0 = time.perf_counter()
    result = run_experiment({
        "experiment": "regimes", "n": 50, "n_problems": 600,
        "split": [400, 200], "seeds": [1],
        "training": {"epochs": 100, "mc_samples": 25},
    }, tmp_path)
    elapsed = time.perf_counter() - t0
    assert result.ok, result.errors

    ok = elapsed <= 1800.0
    lines = []
    for row in result.rows:
        good = (row["rmse"] <= 2.0 * row["sigma_obs"] and row["ece"] <= 0.05
                and 0.90 <= row["cov95"] <= 0.99)
        ok &= good
        lines.append(f"{row['regime']}: rmse={row['rmse']:.4f} "
                     f"(2sig={2 * row['sigma_obs']:.4f}) ece={row['ece']:.4f} "
                     f"cov95={row['cov95']:.3f}")
    report("regime replication n=50", ok, f"{'; '.join(lines)}; {elapsed:.0f}s")


def test_gradient_correctness():
    """Hellmann-Feynman sensitivities vs central finite differences on 20
    random 10x10 problems with delta_min > 1e-2: max rel err <= 1e-6."""
    rng = np.random.default_rng(2024)
    worst = 0.0
    h = 1e-4
    for _ in range(20):
        lam = np.cumsum(rng.uniform(0.02, 0.5, 10))
        q, _ = np.linalg.qr(rng.standard_normal((10, 10)))
        base = q @ np.diag(lam) @ q.T
        corrections = []
        for _ in range(3):
            b = rng.standard_normal((10, 10))
            b = (b + b.T) / 2
            corrections.append(b / np.abs(np.linalg.eigvalsh(b)).max())
        model = suq.ParametricModel(base=(base + base.T) / 2,
                                    corrections=corrections)
        assert np.min(np.diff(np.linalg.eigvalsh(model.base))) > 1e-2
        table = suq.sensitivities(suq.eig_adaptive(model.base), model).first_order

        def spectrum(step, m):
            e = np.zeros(3)
            e[m] = step
            return np.linalg.eigvalsh(suq.assemble(model, np.zeros(0), e))

        for m in range(3):
            # Fourth-order central stencil keeps the oracle's truncation
            # error well below the 1e-6 comparison tolerance.
            fd = (-spectrum(2 * h, m) + 8 * spectrum(h, m)
                  - 8 * spectrum(-h, m) + spectrum(-2 * h, m)) / (12 * h)
            rel = np.abs(table[:, m] - fd) / np.maximum(np.abs(fd), 1e-12)
            worst = max(worst, float(rel.max()))
    report("gradient correctness", worst <= 1e-6, f"max rel err {worst:.2e}")


def test_propagation_oracle():
    """2x2 off-diagonal problem, sigma = 0.05: propagated mean within 15% of
    -sigma^2 and variance within 15% of 2 sigma^4, cross-checked against a
    1e6-sample Monte Carlo."""
    sigma = 0.05
    model = suq.ParametricModel(base=np.diag([0.0, 1.0]),
                                corrections=[np.array([[0.0, 1.0], [1.0, 0.0]])])
    decomp = suq.eig_adaptive(model.base)
    out = suq.propagate_gaussian(decomp, model, [0.0], [[sigma ** 2]],
                                 n_data=10 ** 6)

    rng = np.random.default_rng(77)
    total, s1, s2 = 0, 0.0, 0.0
    for _ in range(10):
        w = sigma * rng.standard_normal(10 ** 5)
        mats = np.zeros((w.size, 2, 2))
        mats[:, 1, 1] = 1.0
        mats[:, 0, 1] = mats[:, 1, 0] = w
        lam0 = np.linalg.eigvalsh(mats)[:, 0]
        total += lam0.size
        s1 += lam0.sum()
        s2 += (lam0 ** 2).sum()
    mc_mean = s1 / total
    mc_var = s2 / total - mc_mean ** 2

    ok = (abs(out.mean[0] - (-sigma ** 2)) <= 0.15 * sigma ** 2
          and abs(out.variance[0] - 2 * sigma ** 4) <= 0.15 * 2 * sigma ** 4
          and abs(out.mean[0] - mc_mean) <= 0.15 * abs(mc_mean)
          and abs(out.variance[0] - mc_var) <= 0.15 * mc_var)
    report("propagation oracle 2x2", ok,
           f"mean {out.mean[0]:.3e} (mc {mc_mean:.3e}), "
           f"var {out.variance[0]:.3e} (mc {mc_var:.3e})")


def test_weyl_property():
    """50 random (A, E) pairs over n in {4, 8, 16}: eigenvalue shifts never
    exceed ||E||_2 + 1e-10."""
    rng = np.random.default_rng(5150)
    worst_excess = -np.inf
    for trial in range(50):
        n = [4, 8, 16][trial % 3]
        a = rng.standard_normal((n, n))
        a = (a + a.T) / 2
        e = rng.uniform(0.01, 1.0) * rng.standard_normal((n, n))
        e = (e + e.T) / 2
        shift = np.abs(suq.eig_adaptive(a + e).eigenvalues
                       - suq.eig_adaptive(a).eigenvalues).max()
        worst_excess = max(worst_excess, shift - np.linalg.norm(e, 2))
    report("Weyl property (50 pairs)", worst_excess <= 1e-10,
           f"worst excess {worst_excess:.2e}")


def test_randomized_solver_bound():
    """20 random 50x50 matrices, k=5: every returned eigenvalue lies within
    the reported residual bound of an exact eigenvalue."""
    rng = np.random.default_rng(31337)
    ok = True
    worst_margin = -np.inf
    for trial in range(20):
        a = rng.standard_normal((50, 50))
        a = (a + a.T) / 2
        res = suq.eig_randomized(a, k=5, oversample=5, tol=1e-8, seed=trial)
        exact = np.linalg.eigvalsh(a)
        for lam in res.eigenvalues:
            dist = np.min(np.abs(exact - lam))
            worst_margin = max(worst_margin, dist - res.residual_bound)
            ok &= dist <= res.residual_bound + 1e-12
    report("randomized solver bound", ok, f"worst margin {worst_margin:.2e}")


def test_calibration_metric_oracle():
    """Perfectly specified Gaussian simulator at N=2000: ECE <= 0.02,
    |cov95 - 0.95| <= 0.02, CRPS(0,1,0) = 0.23369 +/- 1e-4."""
    rng = np.random.default_rng(404)
    z = rng.standard_normal(2000)
    ece_val, _, _, _ = suq.ece(z)
    cov95 = suq.coverage(z, 0.95)
    crps = suq.crps_gaussian(0.0, 1.0, 0.0)
    ok = (ece_val <= 0.02 and abs(cov95 - 0.95) <= 0.02
          and abs(crps - 0.23369) <= 1e-4)
    report("calibration metric oracle", ok,
           f"ece={ece_val:.4f} cov95={cov95:.4f} crps={crps:.5f}")


def test_normality_battery_acceptance():
    """Under H0 (N(0,1), N=500, 200 seeds) each test passes at a rate in
    [0.90, 0.99]; under Uniform(-1,1) KS and AD reject at p < 0.01 in at
    least 95% of seeds."""
    rng = np.random.default_rng(808)
    names = ("shapiro_wilk", "jarque_bera", "anderson_darling",
             "kolmogorov_smirnov", "chi_squared")
    passes = dict.fromkeys(names, 0)
    for _ in range(200):
        results = suq.normality_battery(rng.standard_normal(500))
        for name in names:
            passes[name] += results[name].passed
    rates = {name: passes[name] / 200 for name in names}
    ok = all(0.90 <= r <= 0.99 for r in rates.values())

    rejects = 0
    for _ in range(200):
        results = suq.normality_battery(rng.uniform(-1.0, 1.0, 500))
        rejects += (results["kolmogorov_smirnov"].p_value < 0.01
                    and results["anderson_darling"].p_value < 0.01)
    ok &= rejects >= 0.95 * 200
    rate_str = " ".join(f"{k}={v:.3f}" for k, v in rates.items())
    report("normality battery", ok, f"{rate_str}; uniform rejects {rejects}/200")


def test_scaling_smoke(tmp_path):
    """Grid {5, 20, 50} x complexity {1, 4, 6}, 60 samples: 100%
    eigendecomposition success, ECE <= 0.08 per cell, RMSE nondecreasing in
    complexity at fixed n in >= 7 of 9 cells, under 20 minutes."""
    t0 = time.perf_counter()
    result = run_experiment({
        "experiment": "scaling", "dims": [5, 20, 50],
        "complexities": [1, 4, 6], "samples": 60, "seed": 11,
        "training": {"epochs": 100, "mc_samples": 25},
    }, tmp_path)
    elapsed = time.perf_counter() - t0

    ok = result.ok and result.eig_success == result.eig_attempted == 9
    ok &= all(r["ece"] <= 0.08 for r in result.rows)

    violations = 0
    for n in (5, 20, 50):
        rmse = {r["complexity"]: r["rmse"] for r in result.rows if r["n"] == n}
        for lo, hi in ((1, 4), (4, 6)):
            if rmse[hi] < rmse[lo]:
                violations += 1
    ok &= (9 - violations) >= 7
    ok &= elapsed <= 1200.0
    eces = ", ".join(f"n{r['n']}c{r['complexity']}={r['ece']:.3f}"
                     for r in result.rows)
    report("scaling smoke 3x3", ok,
           f"success {result.eig_success}/9, monotone cells {9 - violations}/9, "
           f"ece [{eces}], {elapsed:.0f}s")


def test_runtime_scaling_exponent():
    """Least-squares exponent of training wall time vs n over {20, 50, 100}
    stays at or below the 2.6 sanity ceiling."""
    times = []
    dims = (20, 50, 100)
    for n in dims:
        spec = suq.RegimeSpec(regime="well_separated", n=n, n_problems=150,
                              split=(120, 30), seed=1)
        model, train_set, _, meta = suq.gen_regime(spec)
        cfg = TrainingConfig(epochs=10, mc_samples=20,
                             sigma_obs=meta["sigma_obs"], seed=1)
        t0 = time.perf_counter()
        suq.train(model, train_set, suq.PriorSpec.default(2), cfg)
        times.append(time.perf_counter() - t0)
    exponent = float(np.polyfit(np.log(dims), np.log(times), 1)[0])
    report("runtime scaling exponent", exponent <= 2.6,
           f"exponent {exponent:.2f} from times "
           + " ".join(f"n{n}={t:.2f}s" for n, t in zip(dims, times)))


def test_deployment_and_feasibility():
    """Worked deployment-score examples reproduce to 3 significant figures
    and the feasibility boundaries flip exactly at the thresholds."""
    s1, band1 = suq.deployment_score(10 ** 4, 50, 1e-1, 1e-4, 1e4)
    s2, band2 = suq.deployment_score(10 ** 4, 50, 1e-2, 1e-3, 1e4)
    ok = (float(f"{s1:.3g}") == 111.0 and band1 == "recommended"
          and float(f"{s2:.3g}") == 1.11 and band2 == "marginal")

    ok &= not suq.feasibility_check(9, 10 ** 6, [0.1], 1.0, 10.0, 0.01).scale
    ok &= suq.feasibility_check(10, 10 ** 6, [0.1], 1.0, 10.0, 0.01).scale
    threshold = 100 * 50 * math.log(50)     # 19560.11...
    ok &= not suq.feasibility_check(50, 19560, [0.1], 1.0, 10.0, 0.01).data
    ok &= suq.feasibility_check(50, 19561, [0.1], 1.0, 10.0, 0.01).data
    report("deployment score and feasibility", ok,
           f"scores {s1:.4g}/{s2:.4g}, data threshold {threshold:.1f}")


def test_convergence_monitor_acceptance():
    """Constant trace converges within W + 12 epochs; an oscillating ELBO
    never converges across 500 epochs."""
    trace = TrainingTrace()
    for _ in range(100):
        trace.elbo_history.append(-10.0)
        trace.grad_rms_history.append(0.0)
        trace.min_gap_history.append(0.4)
        trace.param_history.append(np.array([1.0, 2.0]))
    converged_at = None
    for t in range(1, 101):
        status = monitor_step(trace, t)
        if status.converged:
            converged_at = t
            break
    ok = converged_at is not None and converged_at <= status.window + 12

    osc = TrainingTrace()
    for t in range(500):
        osc.elbo_history.append(-10.0 * (1 + 0.01 * (-1) ** t))
        osc.grad_rms_history.append(0.0)
        osc.min_gap_history.append(0.4)
        osc.param_history.append(np.array([1.0]))
    never = all(not monitor_step(osc, t).converged for t in range(1, 501))
    ok &= never
    report("convergence monitor", ok,
           f"constant converged at {converged_at}, oscillating never={never}")
