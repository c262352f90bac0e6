"""Uncertainty-quality metrics: calibration error, coverage, proper scores,
and a battery of residual-normality tests.

Calibration of regression predictions is assessed through central prediction
intervals: nominal coverage levels are equal-mass quantile midpoints and the
empirical coverage at level p counts standardized residuals with
|z| <= Phi^-1((1+p)/2). ECE averages the absolute nominal/empirical gap over
bins; MCE takes the worst bin.

Normality tests follow the fully-specified-null convention: the predictive
distribution supplies mean and variance, so no parameter-estimation
correction is applied to Anderson-Darling or Kolmogorov-Smirnov p-values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

Z_EPS = 1e-300
ALPHA_DEFAULT = 0.05
COVERAGE_LEVELS = (0.68, 0.95, 0.99)   # alpha in {0.32, 0.05, 0.01}


# ---------------------------------------------------------------------------
# Residuals
# ---------------------------------------------------------------------------

def standardized_residuals(predictions, observations) -> np.ndarray:
    """Flatten z = (y - mean) / sqrt(total variance) over samples and indices.

    Parameters
    ----------
    predictions : sequence of PredictiveDistribution
        Objects exposing ``mean`` and ``total_var`` arrays.
    observations : array_like
        Matching observed eigenvalue arrays, one row per prediction.
    """
    zs = []
    obs = [np.asarray(y, dtype=np.float64) for y in observations]
    if len(obs) != len(predictions):
        raise ValueError(f"{len(predictions)} predictions vs {len(obs)} observation rows")
    for pred, y in zip(predictions, obs):
        mean = np.asarray(pred.mean, dtype=np.float64)
        var = np.asarray(pred.total_var, dtype=np.float64)
        if y.shape != mean.shape:
            raise ValueError(f"observation shape {y.shape} != prediction shape {mean.shape}")
        if np.any(var <= 0.0):
            raise ValueError("total variance must be strictly positive")
        zs.append((y - mean) / np.sqrt(var))
    return np.concatenate(zs) if zs else np.array([])


# ---------------------------------------------------------------------------
# Calibration error
# ---------------------------------------------------------------------------

def adaptive_bins(n_eval: int) -> int:
    """Equal-mass bin count min(10, max(5, floor(N/5)))."""
    return int(min(10, max(5, n_eval // 5)))


def ece(z, n_bins: int | None = None):
    """Expected / maximum / average calibration error over equal-mass levels.

    Returns (ece, mce, ace, table) where table rows are
    (nominal level, empirical coverage, |gap|). Under equal-mass binning each
    bin has weight 1/n_bins, making ACE coincide with ECE; both are reported
    for output-format compatibility.
    """
    z = np.abs(np.asarray(z, dtype=np.float64).ravel())
    if z.size == 0:
        raise ValueError("residual array is empty")
    if n_bins is None:
        n_bins = adaptive_bins(z.size)
    levels = (np.arange(1, n_bins + 1) - 0.5) / n_bins
    thresholds = stats.norm.ppf((1.0 + levels) / 2.0)
    empirical = np.array([(z <= t).mean() for t in thresholds])
    gaps = np.abs(empirical - levels)
    value = float(gaps.mean())
    table = np.column_stack([levels, empirical, gaps])
    return value, float(gaps.max()), value, table


def coverage(z, level: float) -> float:
    """Fraction of residuals inside the central interval at the given level."""
    if not 0.0 < level < 1.0:
        raise ValueError("confidence level must lie in (0, 1)")
    z = np.asarray(z, dtype=np.float64).ravel()
    threshold = stats.norm.ppf((1.0 + level) / 2.0)
    return float((np.abs(z) <= threshold).mean())


def sharpness(sigma, level: float) -> float:
    """Mean central-interval width 2 z_{alpha/2} sigma at the given level."""
    zq = stats.norm.ppf((1.0 + level) / 2.0)
    return float(np.mean(2.0 * zq * np.asarray(sigma, dtype=np.float64)))


def overconfidence_rate(z, level: float = 0.95) -> float:
    """Excess fraction of residuals falling outside their own interval,
    floored at zero."""
    return max(0.0, 1.0 - coverage(z, level) - (1.0 - level))


# ---------------------------------------------------------------------------
# Proper scores
# ---------------------------------------------------------------------------

def crps_gaussian(mu: float, sigma: float, y: float) -> float:
    """Closed-form CRPS of a Gaussian forecast at observation y."""
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    z = (y - mu) / sigma
    return float(sigma * (z * (2.0 * stats.norm.cdf(z) - 1.0)
                          + 2.0 * stats.norm.pdf(z) - 1.0 / math.sqrt(math.pi)))


def interval_score(mu: float, sigma: float, alpha: float, y: float) -> float:
    """Interval width plus (2/alpha)-scaled penalties for misses."""
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    zq = stats.norm.ppf(1.0 - alpha / 2.0)
    lo, hi = mu - zq * sigma, mu + zq * sigma
    return float((hi - lo)
                 + (2.0 / alpha) * max(lo - y, 0.0)
                 + (2.0 / alpha) * max(y - hi, 0.0))


def nll_gaussian(mu: float, sigma: float, y: float) -> float:
    """Gaussian negative log density at y."""
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    return float(0.5 * math.log(2.0 * math.pi * sigma * sigma)
                 + (y - mu) ** 2 / (2.0 * sigma * sigma))


# ---------------------------------------------------------------------------
# Normality battery
# ---------------------------------------------------------------------------

@dataclass
class TestResult:
    statistic: float
    p_value: float
    passed: bool          # at alpha = 0.05
    skipped: bool = False


def _anderson_darling_case0(z: np.ndarray) -> tuple[float, float]:
    """A-squared against the fully specified N(0,1), with the standard
    asymptotic p approximation (Marsaglia & Marsaglia)."""
    z = np.sort(z)
    n = z.size
    u = np.clip(stats.norm.cdf(z), Z_EPS, 1.0 - 1e-16)
    i = np.arange(1, n + 1)
    a2 = -n - np.mean((2.0 * i - 1.0) * (np.log(u) + np.log1p(-u[::-1])))
    return float(a2), 1.0 - _adinf(float(a2))


def _adinf(x: float) -> float:
    """Asymptotic CDF of the Anderson-Darling statistic (case 0)."""
    if x <= 0.0:
        return 0.0
    if x < 2.0:
        poly = (2.00012 + (0.247105 - (0.0649821 - (0.0347962 - (0.011672
                - 0.00168691 * x) * x) * x) * x) * x)
        return float(x ** -0.5 * math.exp(-1.2337141 / x) * poly)
    inner = 1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056
             - 0.0003146 * x) * x) * x) * x) * x
    return float(math.exp(-math.exp(inner)))


def _chi_squared_calibration(z: np.ndarray) -> tuple[float, float]:
    """Two-sided test of sum(z^2) against chi-squared with N dof; rejects
    both over- and under-dispersion."""
    n = z.size
    t = float(np.sum(z * z))
    p = 2.0 * min(stats.chi2.cdf(t, df=n), stats.chi2.sf(t, df=n))
    return t, min(p, 1.0)


def normality_battery(z, alpha: float = ALPHA_DEFAULT) -> dict[str, TestResult]:
    """Run the five-test battery on standardized residuals.

    Tests: Shapiro-Wilk (Royston approximation, valid 3 <= N <= 5000),
    Jarque-Bera (chi-squared_2 p-value), Anderson-Darling case 0,
    Kolmogorov-Smirnov vs the standard normal (asymptotic p), and the
    two-sided chi-squared calibration test. Out-of-validity sample sizes mark
    the affected test skipped rather than failed.
    """
    z = np.asarray(z, dtype=np.float64).ravel()
    n = z.size
    if n < 8:
        raise ValueError(f"battery requires at least 8 residuals, got {n}")
    results: dict[str, TestResult] = {}

    if 3 <= n <= 5000:
        sw = stats.shapiro(z)
        results["shapiro_wilk"] = TestResult(float(sw.statistic), float(sw.pvalue),
                                             bool(sw.pvalue > alpha))
    else:
        results["shapiro_wilk"] = TestResult(float("nan"), float("nan"),
                                             passed=False, skipped=True)

    jb = stats.jarque_bera(z)
    results["jarque_bera"] = TestResult(float(jb.statistic), float(jb.pvalue),
                                        bool(jb.pvalue > alpha))

    a2, p_ad = _anderson_darling_case0(z)
    results["anderson_darling"] = TestResult(a2, p_ad, bool(p_ad > alpha))

    ks = stats.kstest(z, "norm", mode="asymp")
    results["kolmogorov_smirnov"] = TestResult(float(ks.statistic), float(ks.pvalue),
                                               bool(ks.pvalue > alpha))

    chi_t, chi_p = _chi_squared_calibration(z)
    results["chi_squared"] = TestResult(chi_t, chi_p, bool(chi_p > alpha))
    return results


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------

CSV_COLUMNS = ["ece", "mce", "ace", "reliability", "cov68", "cov95", "cov99",
               "sharp95", "crps", "pis95", "nll",
               "p_shapiro_wilk", "p_jarque_bera", "p_anderson_darling",
               "p_kolmogorov_smirnov", "p_chi_squared"]


@dataclass
class CalibrationReport:
    """One experiment's uncertainty-quality summary."""

    ece: float
    mce: float
    ace: float
    reliability: float                     # 1 - ece
    coverage: dict[float, float]
    sharpness: dict[float, float]
    crps: float
    interval_score: dict[float, float]
    nll: float
    normality: dict[str, TestResult]
    n_bins: int

    def to_json(self) -> dict:
        return {
            "ece": self.ece, "mce": self.mce, "ace": self.ace,
            "reliability": self.reliability,
            "coverage": {f"{k:g}": v for k, v in self.coverage.items()},
            "sharpness": {f"{k:g}": v for k, v in self.sharpness.items()},
            "crps": self.crps,
            "interval_score": {f"{k:g}": v for k, v in self.interval_score.items()},
            "nll": self.nll,
            "normality": {name: {"statistic": r.statistic, "p_value": r.p_value,
                                 "passed": r.passed, "skipped": r.skipped}
                          for name, r in self.normality.items()},
            "n_bins": self.n_bins,
        }

    def csv_row(self) -> dict[str, float]:
        row = {
            "ece": self.ece, "mce": self.mce, "ace": self.ace,
            "reliability": self.reliability,
            "cov68": self.coverage[0.68], "cov95": self.coverage[0.95],
            "cov99": self.coverage[0.99], "sharp95": self.sharpness[0.95],
            "crps": self.crps, "pis95": self.interval_score[0.95],
            "nll": self.nll,
        }
        for name, r in self.normality.items():
            row[f"p_{name}"] = r.p_value
        return row


def calibration_report(predictions, observations,
                       levels=COVERAGE_LEVELS) -> CalibrationReport:
    """Compute the full report for a set of predictions and held-out truths."""
    z = standardized_residuals(predictions, observations)
    n_bins = adaptive_bins(z.size)
    value, mce, ace, _ = ece(z, n_bins)

    mus, sigmas, ys = [], [], []
    for pred, y in zip(predictions, observations):
        mus.append(np.asarray(pred.mean, dtype=np.float64))
        sigmas.append(np.sqrt(np.asarray(pred.total_var, dtype=np.float64)))
        ys.append(np.asarray(y, dtype=np.float64))
    mu = np.concatenate(mus)
    sigma = np.concatenate(sigmas)
    y = np.concatenate(ys)

    cov = {lv: coverage(z, lv) for lv in levels}
    sharp = {lv: sharpness(sigma, lv) for lv in levels}
    crps = float(np.mean([crps_gaussian(m, s, t) for m, s, t in zip(mu, sigma, y)]))
    pis = {lv: float(np.mean([interval_score(m, s, 1.0 - lv, t)
                              for m, s, t in zip(mu, sigma, y)]))
           for lv in levels}
    nll = float(np.mean([nll_gaussian(m, s, t) for m, s, t in zip(mu, sigma, y)]))

    return CalibrationReport(
        ece=value, mce=mce, ace=ace, reliability=1.0 - value,
        coverage=cov, sharpness=sharp, crps=crps, interval_score=pis,
        nll=nll, normality=normality_battery(z), n_bins=n_bins)
