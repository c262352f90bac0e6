"""Deterministic Adam training loop with windowed convergence monitoring.

One full-batch gradient step per epoch; the learning rate follows cosine
annealing to zero and gradients are clipped at a global norm. Convergence is
declared when four windowed criteria (relative ELBO change, parameter drift,
gradient RMS, spectral-gap drift) all hold for more than ten consecutive
epochs. The best-so-far posterior (by ELBO) is what training returns.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .matrices import ParametricModel
from .variational import (Dataset, PriorSpec, VariationalPosterior,
                          _elbo_impl, initial_posterior, score_function_gradient)

THRESH_ELBO = 1e-4
THRESH_PARAM = 1e-3
THRESH_GRAD = 1e-5
THRESH_GAP = 1e-2
PATIENCE = 10
_TINY = 1e-300


@dataclass
class TrainingConfig:
    epochs: int = 100
    learning_rate: float = 3e-4
    grad_clip_norm: float = 0.5
    mc_samples: int = 25          # paper protocol: 20-25 forward samples
    seed: int = 0
    rank: int = 0
    init_diag_var: float = 1e-4
    estimator: str = "reparameterized"   # or "score_with_cv"
    sigma_obs: float = 0.01
    snapshot_every: int = 10

    def __post_init__(self):
        if self.epochs < 1 or self.learning_rate <= 0 or self.grad_clip_norm <= 0:
            raise ValueError("epochs, learning_rate and grad_clip_norm must be positive")
        if self.mc_samples < 2:
            raise ValueError("mc_samples must be at least 2")
        if self.estimator not in ("reparameterized", "score_with_cv"):
            raise ValueError(f"unknown estimator '{self.estimator}'")

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in (
            "epochs", "learning_rate", "grad_clip_norm", "mc_samples", "seed",
            "rank", "init_diag_var", "estimator", "sigma_obs", "snapshot_every")}

    @classmethod
    def from_json(cls, obj: dict) -> "TrainingConfig":
        known = {k: obj[k] for k in cls().to_json() if k in obj}
        return cls(**known)


@dataclass
class TrainingTrace:
    elbo_history: list[float] = field(default_factory=list)
    grad_rms_history: list[float] = field(default_factory=list)
    min_gap_history: list[float] = field(default_factory=list)
    param_history: list[np.ndarray] = field(default_factory=list)
    param_snapshots: list[tuple[int, VariationalPosterior]] = field(default_factory=list)
    best_epoch: int = 0
    converged: bool = False
    convergence_epoch: int | None = None

    def __len__(self) -> int:
        return len(self.elbo_history)

    def to_json(self) -> dict:
        return {
            "elbo": self.elbo_history,
            "grad_rms": self.grad_rms_history,
            "min_gap": self.min_gap_history,
            "best_epoch": self.best_epoch,
            "converged": self.converged,
            "convergence_epoch": self.convergence_epoch,
            "snapshots": [{"epoch": e, "posterior": q.to_json()}
                          for e, q in self.param_snapshots],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "elbo", "grad_rms", "min_gap"])
        for e, (l, g, d) in enumerate(zip(self.elbo_history, self.grad_rms_history,
                                          self.min_gap_history)):
            writer.writerow([e, repr(l), repr(g), repr(d)])
        return buf.getvalue()

    def save(self, directory: str | Path, stem: str = "trace") -> None:
        directory = Path(directory)
        (directory / f"{stem}.json").write_text(json.dumps(self.to_json(), sort_keys=True))
        (directory / f"{stem}.csv").write_text(self.to_csv())


@dataclass
class ConvergenceStatus:
    converged: bool
    window: int
    criteria: dict[str, bool]
    consecutive: int


class TrainingAborted(RuntimeError):
    """Raised when the objective turns non-finite; carries the trace."""

    def __init__(self, message: str, trace: TrainingTrace):
        super().__init__(message)
        self.trace = trace


def _window(t: int) -> int:
    return max(1, min(50, t // 10))


def _criteria_at(trace: TrainingTrace, t: int) -> dict[str, bool] | None:
    """Windowed criteria for epoch count t (1-based); None if history is short."""
    w = _window(t)
    if t < w + 1 or len(trace) < t:
        return None
    cur, ref = t - 1, t - 1 - w
    elbo_now = trace.elbo_history[cur]
    d_elbo = abs(elbo_now - trace.elbo_history[ref]) / max(abs(elbo_now), _TINY)
    p_now = trace.param_history[cur]
    d_param = (np.linalg.norm(p_now - trace.param_history[ref])
               / max(np.linalg.norm(p_now), _TINY))
    gap_now = trace.min_gap_history[cur]
    d_gap = abs(gap_now - trace.min_gap_history[ref]) / max(abs(gap_now), _TINY)
    return {
        "elbo": d_elbo < THRESH_ELBO,
        "params": d_param < THRESH_PARAM,
        "grad": trace.grad_rms_history[cur] < THRESH_GRAD,
        "min_gap": d_gap < THRESH_GAP,
    }


def monitor_step(trace: TrainingTrace, t: int) -> ConvergenceStatus:
    """Evaluate convergence after epoch t (1-based epoch count).

    Convergence requires all four windowed criteria to hold for more than
    ``PATIENCE`` consecutive epochs; insufficient history simply reports not
    converged.
    """
    latest = _criteria_at(trace, t)
    if latest is None:
        return ConvergenceStatus(False, _window(t), {}, 0)
    consecutive = 0
    for tp in range(t, 0, -1):
        crit = _criteria_at(trace, tp)
        if crit is None or not all(crit.values()):
            break
        consecutive += 1
    return ConvergenceStatus(consecutive > PATIENCE, _window(t), latest, consecutive)


class Adam:
    """Plain Adam on a flat parameter vector (ascent direction)."""

    def __init__(self, size: int, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0

    def step(self, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return lr * m_hat / (np.sqrt(v_hat) + self.eps)


def cosine_lr(base: float, epoch: int, total: int) -> float:
    return base * 0.5 * (1.0 + np.cos(np.pi * epoch / total))


def _pack(q: VariationalPosterior) -> np.ndarray:
    return np.concatenate([q.mean, q.lowrank.ravel(), np.log(q.diag_var),
                           [q.log_alpha_reg]])


def _unpack(theta: np.ndarray, m: int, r: int) -> VariationalPosterior:
    mean = theta[:m]
    low = theta[m:m + m * r].reshape(m, r)
    log_d = theta[m + m * r:2 * m + m * r]
    return VariationalPosterior(mean=mean, lowrank=low,
                                diag_var=np.exp(log_d),
                                log_alpha_reg=float(theta[-1]))


def _probe_min_gap(model: ParametricModel, dataset: Dataset,
                   q: VariationalPosterior) -> float:
    """Spectral-stability probe: min gap of P(mean input; posterior mean)."""
    x_bar = dataset.x.mean(axis=0) if len(dataset) else np.zeros(model.n_inputs)
    p = model.base.copy()
    for xk, pk in zip(x_bar, model.couplings):
        p += xk * pk
    for wm, bm in zip(q.mean, model.corrections):
        p += wm * bm
    lam = np.linalg.eigvalsh((p + p.T) / 2.0)
    if lam.size < 2:
        return float("inf")
    return float(np.min(np.diff(lam)))


def train(model: ParametricModel, dataset: Dataset, prior: PriorSpec,
          config: TrainingConfig) -> tuple[VariationalPosterior, TrainingTrace]:
    """Optimize the variational posterior; returns (best posterior, trace)."""
    if len(dataset) < 10:
        raise ValueError(f"training needs at least 10 data points, got {len(dataset)}")
    m = model.n_corrections
    q = initial_posterior(m, rank=config.rank, diag_var=config.init_diag_var)
    theta = _pack(q)
    opt = Adam(theta.size)
    trace = TrainingTrace()
    best_value = -np.inf
    best_q = q

    for epoch in range(config.epochs):
        q = _unpack(theta, m, config.rank)
        try:
            value, _, grad = _elbo_impl(q, prior, model, dataset,
                                        config.sigma_obs, config.mc_samples,
                                        seed=_epoch_seed(config.seed, epoch),
                                        want_grad=True)
        except Exception as exc:
            raise TrainingAborted(f"objective failed at epoch {epoch}: {exc}",
                                  trace) from exc
        if config.estimator == "score_with_cv":
            grad = score_function_gradient(q, prior, model, dataset,
                                           config.sigma_obs, config.mc_samples,
                                           seed=_epoch_seed(config.seed, epoch))
        if not np.isfinite(value):
            raise TrainingAborted(f"non-finite ELBO at epoch {epoch}", trace)

        g = grad.flat()
        trace.elbo_history.append(float(value))
        trace.grad_rms_history.append(float(np.sqrt(np.mean(g * g))))
        trace.min_gap_history.append(_probe_min_gap(model, dataset, q))
        trace.param_history.append(theta.copy())
        if epoch % max(1, config.snapshot_every) == 0:
            trace.param_snapshots.append((epoch, q))
        if value > best_value:
            best_value = float(value)
            trace.best_epoch = epoch
            best_q = q

        status = monitor_step(trace, epoch + 1)
        if status.converged:
            trace.converged = True
            trace.convergence_epoch = epoch
            break

        gnorm = float(np.linalg.norm(g))
        if gnorm > config.grad_clip_norm:
            g = g * (config.grad_clip_norm / gnorm)
        lr = cosine_lr(config.learning_rate, epoch, config.epochs)
        theta = theta + opt.step(g, lr)

    return best_q, trace


def _epoch_seed(seed: int, epoch: int) -> int:
    # splitmix64-style mix keeps per-epoch streams decorrelated.
    z = (int(seed) & 0xFFFFFFFFFFFFFFFF) ^ (0x9E3779B97F4A7C15 * (epoch + 1)
                                            & 0xFFFFFFFFFFFFFFFF)
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & 0xFFFFFFFFFFFFFFFF
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)
