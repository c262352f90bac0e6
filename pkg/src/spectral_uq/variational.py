"""Gaussian variational posterior over latent corrections and its ELBO.

The posterior q(w) = N(mu, L L^T + diag(d)) is trained against a Gaussian
likelihood on observed eigenvalues with a KL penalty to an independent
Gaussian prior. Gradients are pathwise: eigenvalue derivatives are the
Hellmann-Feynman diagonal Rayleigh quotients, chained through the
reparameterization w = mu + L eps1 + sqrt(d) * eps2. Diagonal variances are
optimized in log-space.

All Monte Carlo draws come from counter-keyed Philox streams, so every
quantity here is a deterministic function of (inputs, seed) and per-sample
streams can be evaluated in any order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ._rng import keyed_rng
from .matrices import ParametricModel
from .spectral import SpectralError, eig_with_ladder

LOG_ALPHA_INIT = float(np.log(1e-4))
_EIG_CHUNK = 4096        # cap on matrices decomposed per LAPACK batch call


@dataclass(frozen=True)
class VariationalPosterior:
    """Low-rank plus diagonal Gaussian over the latent corrections."""

    mean: np.ndarray                 # (M,)
    lowrank: np.ndarray              # (M, r), r >= 0
    diag_var: np.ndarray             # (M,) strictly positive
    log_alpha_reg: float = LOG_ALPHA_INIT

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        low = np.asarray(self.lowrank, dtype=np.float64)
        if low.ndim == 1:
            low = low.reshape(mean.size, -1)
        d = np.atleast_1d(np.asarray(self.diag_var, dtype=np.float64))
        if low.shape[0] != mean.size or d.shape != mean.shape:
            raise ValueError("posterior component shapes disagree")
        if low.shape[1] > mean.size:
            raise ValueError("low-rank factor cannot exceed full rank")
        if np.any(d <= 0.0):
            raise ValueError("diagonal variances must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "lowrank", low)
        object.__setattr__(self, "diag_var", d)

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def rank(self) -> int:
        return self.lowrank.shape[1]

    def covariance(self) -> np.ndarray:
        return self.lowrank @ self.lowrank.T + np.diag(self.diag_var)

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "lowrank": self.lowrank.tolist(),
                "diag_var": self.diag_var.tolist(),
                "log_alpha_reg": float(self.log_alpha_reg)}

    @classmethod
    def from_json(cls, obj: dict) -> "VariationalPosterior":
        return cls(mean=np.asarray(obj["mean"], dtype=np.float64),
                   lowrank=np.asarray(obj["lowrank"], dtype=np.float64).reshape(
                       len(obj["mean"]), -1),
                   diag_var=np.asarray(obj["diag_var"], dtype=np.float64),
                   log_alpha_reg=float(obj.get("log_alpha_reg", LOG_ALPHA_INIT)))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "VariationalPosterior":
        return cls.from_json(json.loads(Path(path).read_text()))


def initial_posterior(m: int, rank: int = 0, diag_var: float = 1e-4) -> VariationalPosterior:
    """Small-variance initialization near the MAP point (mean zero)."""
    return VariationalPosterior(mean=np.zeros(m), lowrank=np.zeros((m, rank)),
                                diag_var=np.full(m, diag_var))


@dataclass(frozen=True)
class PriorSpec:
    """Independent Gaussian prior on the latent corrections."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        var = np.atleast_1d(np.asarray(self.variance, dtype=np.float64))
        if var.shape != mean.shape:
            raise ValueError("prior mean and variance shapes disagree")
        if np.any(var <= 0.0):
            raise ValueError("prior variances must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)

    @classmethod
    def default(cls, m: int, scale: float = 0.2) -> "PriorSpec":
        # N(0, 0.2^2) covers every generator's input range with slack.
        return cls(mean=np.zeros(m), variance=np.full(m, scale * scale))


@dataclass
class Dataset:
    """Observed inputs and sorted eigenvalue observations."""

    x: np.ndarray       # (N, K)
    y: np.ndarray       # (N, n)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.x.ndim == 1:
            self.x = self.x.reshape(len(self.y), -1)
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError("x and y row counts disagree")

    def __len__(self) -> int:
        return self.x.shape[0]

    def to_json(self) -> dict:
        return {"x": self.x.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "Dataset":
        return cls(x=np.asarray(obj["x"], dtype=np.float64),
                   y=np.asarray(obj["y"], dtype=np.float64))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: str | Path) -> "Dataset":
        return cls.from_json(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def draw_noise(q: VariationalPosterior, n_samples: int, seed: int):
    """Standard-normal driving noise, one Philox stream per sample index."""
    eps1 = np.empty((n_samples, q.rank))
    eps2 = np.empty((n_samples, q.dim))
    for s in range(n_samples):
        rng = keyed_rng(seed, s)
        eps1[s] = rng.standard_normal(q.rank)
        eps2[s] = rng.standard_normal(q.dim)
    return eps1, eps2


def sample_posterior(q: VariationalPosterior, n_samples: int, seed: int) -> np.ndarray:
    """Reparameterized samples w = mu + L eps1 + sqrt(d) * eps2, shape (S, M).

    Deterministic given (q, n_samples, seed); sample s depends only on the
    stream keyed (seed, s).
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    eps1, eps2 = draw_noise(q, n_samples, seed)
    return q.mean + eps1 @ q.lowrank.T + np.sqrt(q.diag_var) * eps2


# ---------------------------------------------------------------------------
# KL divergence
# ---------------------------------------------------------------------------

def _logdet_lowrank_diag(low: np.ndarray, d: np.ndarray) -> float:
    """log det(L L^T + diag d) via the determinant lemma on the r x r
    capacitance matrix."""
    r = low.shape[1]
    base = float(np.sum(np.log(d)))
    if r == 0:
        return base
    cap = np.eye(r) + (low.T / d) @ low
    sign, logdet = np.linalg.slogdet(cap)
    if sign <= 0:
        raise np.linalg.LinAlgError("capacitance matrix not positive definite")
    return base + float(logdet)


def kl_gaussian(q: VariationalPosterior, prior: PriorSpec) -> float:
    """Closed-form KL[q || p] between the structured Gaussian and the
    independent Gaussian prior."""
    m = q.dim
    if prior.mean.size != m:
        raise ValueError("prior dimension disagrees with posterior")
    diff = q.mean - prior.mean
    trace_term = float(np.sum((q.diag_var + np.sum(q.lowrank ** 2, axis=1))
                              / prior.variance))
    quad = float(np.sum(diff * diff / prior.variance))
    logdet_prior = float(np.sum(np.log(prior.variance)))
    logdet_q = _logdet_lowrank_diag(q.lowrank, q.diag_var)
    return max(0.0, 0.5 * (trace_term + quad - m + logdet_prior - logdet_q))


def _kl_gradients(q: VariationalPosterior, prior: PriorSpec):
    """Analytic gradients of KL[q || p] wrt (mu, L, log d)."""
    sigma = q.covariance()
    sigma_inv = np.linalg.inv(sigma)
    v_inv = 1.0 / prior.variance
    g_mean = v_inv * (q.mean - prior.mean)
    g_low = (v_inv[:, None] * q.lowrank) - sigma_inv @ q.lowrank
    g_d = 0.5 * (v_inv - np.diag(sigma_inv))
    return g_mean, g_low, g_d * q.diag_var   # chain rule to log d


# ---------------------------------------------------------------------------
# Likelihood forward pass
# ---------------------------------------------------------------------------

def _input_matrices(model: ParametricModel, x: np.ndarray) -> np.ndarray:
    """P0 + sum_k x_k P_k for every row of x, shape (N, n, n)."""
    base = np.broadcast_to(model.base, (x.shape[0],) + model.base.shape).copy()
    if model.couplings:
        base += np.einsum("nk,kij->nij", x, np.stack(model.couplings))
    return base


def _batched_eigh(p_batch: np.ndarray, alpha_start: float, want_vectors: bool,
                  events: list[str], sample_label: str):
    """Batched symmetric eigendecomposition with per-matrix ladder fallback."""
    try:
        for lo in range(0, p_batch.shape[0], _EIG_CHUNK):
            hi = min(lo + _EIG_CHUNK, p_batch.shape[0])
            if want_vectors:
                lam_c, v_c = np.linalg.eigh(p_batch[lo:hi])
            else:
                lam_c, v_c = np.linalg.eigvalsh(p_batch[lo:hi]), None
            if lo == 0:
                lam = np.empty((p_batch.shape[0],) + lam_c.shape[1:])
                v = None if v_c is None else np.empty(
                    (p_batch.shape[0],) + v_c.shape[1:])
            lam[lo:hi] = lam_c
            if v is not None:
                v[lo:hi] = v_c
        if np.all(np.isfinite(lam)):
            return lam, v
    except np.linalg.LinAlgError:
        pass
    # Slow path: recover matrix by matrix so the offender can be named.
    n = p_batch.shape[-1]
    lam = np.empty((p_batch.shape[0], n))
    v = np.empty((p_batch.shape[0], n, n)) if want_vectors else None
    for idx in range(p_batch.shape[0]):
        try:
            lam_i, v_i, ev = eig_with_ladder(p_batch[idx], start=alpha_start,
                                             vectors=want_vectors)
        except SpectralError as exc:
            raise SpectralError(
                f"eigendecomposition failed for {sample_label}, item {idx}: {exc}"
            ) from exc
        events.extend(ev)
        lam[idx] = lam_i
        if v is not None:
            v[idx] = v_i
    return lam, v


def _gaussian_loglik(resid: np.ndarray, sigma_obs: float) -> float:
    n_obs = resid.size
    return float(-0.5 * n_obs * np.log(2.0 * np.pi * sigma_obs ** 2)
                 - np.sum(resid * resid) / (2.0 * sigma_obs ** 2))


def elbo(q: VariationalPosterior, prior: PriorSpec, model: ParametricModel,
         dataset: Dataset, sigma_obs: float, n_samples: int, seed: int):
    """Monte Carlo ELBO estimate.

    Returns (value, {"loglik": ..., "kl": ...}). The log-likelihood averages
    over posterior samples; eigenvalues are matched to observations by
    ascending sort.
    """
    value, breakdown, _ = _elbo_impl(q, prior, model, dataset, sigma_obs,
                                     n_samples, seed, want_grad=False)
    return value, breakdown


@dataclass
class ElboGradient:
    """Gradient of the ELBO in the optimization parameterization."""

    mean: np.ndarray
    lowrank: np.ndarray
    log_diag: np.ndarray
    log_alpha_reg: float = 0.0

    def flat(self) -> np.ndarray:
        return np.concatenate([self.mean.ravel(), self.lowrank.ravel(),
                               self.log_diag.ravel(), [self.log_alpha_reg]])


def grad_elbo(q: VariationalPosterior, prior: PriorSpec, model: ParametricModel,
              dataset: Dataset, sigma_obs: float, n_samples: int,
              seed: int) -> ElboGradient:
    """Pathwise ELBO gradient wrt (mu, L, log d, log alpha_reg).

    Uses the same noise streams as :func:`elbo` for the given seed, so
    common-random-number finite differences of the ELBO converge to this
    gradient. The learned regularization exponent receives gradient only
    through the stability ladder, which contributes nothing on the smooth
    path, so its entry is zero in regular operation.
    """
    _, _, grad = _elbo_impl(q, prior, model, dataset, sigma_obs, n_samples,
                            seed, want_grad=True)
    return grad


def _elbo_impl(q, prior, model, dataset, sigma_obs, n_samples, seed, want_grad,
               events: list[str] | None = None):
    if sigma_obs <= 0.0:
        raise ValueError("sigma_obs must be positive")
    if n_samples < 1:
        raise ValueError("need at least one Monte Carlo sample")
    if events is None:
        events = []

    eps1, eps2 = draw_noise(q, n_samples, seed)
    sqrt_d = np.sqrt(q.diag_var)
    w_samples = q.mean + eps1 @ q.lowrank.T + sqrt_d * eps2

    kl = kl_gaussian(q, prior)
    n_points = len(dataset)
    loglik = 0.0
    g_w_acc = np.zeros((n_samples, q.dim)) if want_grad else None

    if n_points > 0:
        base = _input_matrices(model, dataset.x)
        corr = np.stack(model.corrections)
        alpha = float(np.exp(q.log_alpha_reg))
        for s in range(n_samples):
            p_s = base + np.tensordot(w_samples[s], corr, axes=1)
            lam, v = _batched_eigh(p_s, alpha, want_grad, events,
                                   sample_label=f"posterior sample {s}")
            resid = dataset.y - lam
            loglik += _gaussian_loglik(resid, sigma_obs)
            if want_grad:
                dldlam = resid / sigma_obs ** 2          # (N, n)
                wmat = np.matmul(v * dldlam[:, None, :], v.transpose(0, 2, 1))
                g_w_acc[s] = np.einsum("nij,mij->m", wmat, corr)
        loglik /= n_samples

    value = loglik - kl
    if not want_grad:
        return value, {"loglik": loglik, "kl": kl}, None

    g_mean = g_w_acc.mean(axis=0)
    g_low = (g_w_acc.T @ eps1) / n_samples
    g_logd = (g_w_acc * eps2).mean(axis=0) * 0.5 * sqrt_d
    kl_mean, kl_low, kl_logd = _kl_gradients(q, prior)
    grad = ElboGradient(mean=g_mean - kl_mean, lowrank=g_low - kl_low,
                        log_diag=g_logd - kl_logd, log_alpha_reg=0.0)
    return value, {"loglik": loglik, "kl": kl}, grad


# ---------------------------------------------------------------------------
# Score-function estimator support
# ---------------------------------------------------------------------------

def cv_fit(w_samples, f_values, eigenvalue_samples):
    """Fit the optimal linear control variate b(w) = alpha . lam(w) + beta.

    ``w_samples`` is carried for provenance; the regression uses eigenvalue
    features only. Returns (alpha, beta, variance_reduction, ridged) where
    ``ridged`` flags the 1e-8 ridge fallback taken on a rank-deficient
    design. A constant target is a perfect fit by convention (0/0 -> 1).
    """
    f = np.asarray(f_values, dtype=np.float64).ravel()
    feats = np.asarray(eigenvalue_samples, dtype=np.float64)
    if feats.ndim == 1:
        feats = feats[:, None]
    s, n_feat = feats.shape
    if f.size != s:
        raise ValueError("f_values and eigenvalue_samples disagree in length")
    if s <= n_feat + 1:
        raise ValueError(f"need more than {n_feat + 1} samples, got {s}")

    var_f = float(np.var(f))
    if var_f == 0.0 or np.ptp(f) == 0.0:
        return np.zeros(n_feat), float(f[0]), 1.0, False

    design = np.column_stack([feats, np.ones(s)])
    ridged = False
    coef, _, rank, _ = np.linalg.lstsq(design, f, rcond=None)
    if rank < n_feat + 1:
        gram = design.T @ design + 1e-8 * np.eye(n_feat + 1)
        coef = np.linalg.solve(gram, design.T @ f)
        ridged = True
    alpha, beta = coef[:-1], float(coef[-1])

    resid = f - design @ coef
    reduction = 1.0 - float(np.var(resid)) / var_f
    return alpha, beta, reduction, ridged


def score_function_gradient(q: VariationalPosterior, prior: PriorSpec,
                            model: ParametricModel, dataset: Dataset,
                            sigma_obs: float, n_samples: int, seed: int,
                            use_cv: bool = True) -> ElboGradient:
    """Score-function (REINFORCE) gradient with spectral control variates.

    The control variate regresses the per-sample log-likelihood onto the
    eigenvalues of the model at the mean training input, per the optimal
    linear form. Opt-in alternative to the pathwise default.
    """
    w_samples = sample_posterior(q, n_samples, seed)
    base_x = dataset.x.mean(axis=0) if len(dataset) else np.zeros(model.n_inputs)
    feats = np.empty((n_samples, model.n))
    f_vals = np.empty(n_samples)
    corr = np.stack(model.corrections)
    base = _input_matrices(model, dataset.x) if len(dataset) else None
    probe = _input_matrices(model, base_x[None, :])[0]
    for s in range(n_samples):
        shift = np.tensordot(w_samples[s], corr, axes=1)
        feats[s] = np.linalg.eigvalsh(probe + shift)
        if base is None:
            f_vals[s] = 0.0
        else:
            lam = np.linalg.eigvalsh(base + shift)
            f_vals[s] = _gaussian_loglik(dataset.y - lam, sigma_obs)

    if use_cv and n_samples > model.n + 1:
        alpha, beta, _, _ = cv_fit(w_samples, f_vals, feats)
        weights = f_vals - (feats @ alpha + beta)
    else:
        weights = f_vals - f_vals.mean()

    sigma = q.covariance()
    sigma_inv = np.linalg.inv(sigma)
    centered = w_samples - q.mean
    g_mean = np.zeros(q.dim)
    g_low = np.zeros_like(q.lowrank)
    g_d = np.zeros(q.dim)
    for s in range(n_samples):
        u = sigma_inv @ centered[s]
        score_sigma = 0.5 * (np.outer(u, u) - sigma_inv)
        g_mean += weights[s] * u
        g_low += weights[s] * 2.0 * (score_sigma @ q.lowrank)
        g_d += weights[s] * np.diag(score_sigma)
    g_mean /= n_samples
    g_low /= n_samples
    g_logd = (g_d / n_samples) * q.diag_var

    kl_mean, kl_low, kl_logd = _kl_gradients(q, prior)
    return ElboGradient(mean=g_mean - kl_mean, lowrank=g_low - kl_low,
                        log_diag=g_logd - kl_logd, log_alpha_reg=0.0)


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

@dataclass
class PredictiveDistribution:
    """Per-eigenvalue predictive moments with epistemic/aleatoric split."""

    mean: np.ndarray
    epistemic_var: np.ndarray
    aleatoric_var: float

    @property
    def total_var(self) -> np.ndarray:
        return self.epistemic_var + self.aleatoric_var

    def scale_variance(self, factor: float) -> "PredictiveDistribution":
        """Temperature hook: multiply both variance components."""
        if factor <= 0.0:
            raise ValueError("variance scale must be positive")
        return replace(self, epistemic_var=self.epistemic_var * factor,
                       aleatoric_var=self.aleatoric_var * factor)

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(),
                "epistemic_var": self.epistemic_var.tolist(),
                "aleatoric_var": float(self.aleatoric_var),
                "total_var": self.total_var.tolist()}


def predict(q: VariationalPosterior, model: ParametricModel, x, sigma_obs: float,
            n_samples: int = 25, seed: int = 0) -> PredictiveDistribution:
    """Monte Carlo predictive distribution at a single input."""
    return predict_batch(q, model, np.atleast_2d(np.asarray(x, dtype=np.float64)),
                         sigma_obs, n_samples, seed)[0]


def predict_batch(q: VariationalPosterior, model: ParametricModel, x_batch,
                  sigma_obs: float, n_samples: int = 25,
                  seed: int = 0) -> list[PredictiveDistribution]:
    """Predictive distributions for many inputs, sharing posterior samples."""
    x_batch = np.asarray(x_batch, dtype=np.float64)
    if x_batch.ndim != 2:
        raise ValueError("x_batch must be 2-d")
    if sigma_obs < 0.0:
        raise ValueError("sigma_obs must be nonnegative")
    w_samples = sample_posterior(q, n_samples, seed)
    base = _input_matrices(model, x_batch)
    corr = np.stack(model.corrections)
    lam = np.empty((n_samples, x_batch.shape[0], model.n))
    events: list[str] = []
    for s in range(n_samples):
        p_s = base + np.tensordot(w_samples[s], corr, axes=1)
        lam[s], _ = _batched_eigh(p_s, float(np.exp(q.log_alpha_reg)), False,
                                  events, sample_label=f"posterior sample {s}")
    mean = lam.mean(axis=0)
    epi = lam.var(axis=0, ddof=1) if n_samples > 1 else np.zeros_like(mean)
    return [PredictiveDistribution(mean=mean[i], epistemic_var=epi[i],
                                   aleatoric_var=sigma_obs ** 2)
            for i in range(x_batch.shape[0])]
