"""Analytic propagation of Gaussian parameter uncertainty into the spectrum.

First-order eigenvalue sensitivities are the diagonal Rayleigh quotients
v_i^T B_m v_i; second-order curvature uses regularized denominators whose
magnitude is floored at alpha_N = C_alpha * N^(-1/3) while keeping the sign
of the eigenvalue difference. Near-degenerate clusters are detected and
downgraded to subspace-level statements instead of silently propagating
divergent per-eigenvalue variances.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .matrices import Matrix, ParametricModel
from .spectral import SpectralClusters, SpectralDecomposition, cluster, eig_adaptive

WARN_RELIABILITY = 0.5
UNRELIABLE_MESSAGE = "Uncertainty estimates may be unreliable"


class Regime(str, Enum):
    WELL_SEPARATED = "well_separated"
    STATISTICAL_DEGENERACY = "statistical_degeneracy"
    NUMERICAL_DEGENERACY = "numerical_degeneracy"


@dataclass
class SensitivityTable:
    """First-order sensitivities s[i, m] = v_i^T B_m v_i."""

    first_order: np.ndarray            # n x M
    unreliable_rows: np.ndarray        # bool per eigenvalue (low-confidence rows)
    decomposition: SpectralDecomposition


@dataclass
class PropagatedUncertainty:
    """Per-eigenvalue mean/variance plus per-cluster regime diagnostics.

    ``propagate_gaussian`` fills only the moment fields; the cluster-level
    fields are populated by :func:`propagate_adaptive`.
    """

    mean: np.ndarray
    variance: np.ndarray
    regimes: list[str] = field(default_factory=list)       # per cluster
    reliability: float = 1.0
    subspace_bounds: list[float] = field(default_factory=list)  # per cluster
    clusters: SpectralClusters | None = None
    warning: bool = False
    reduced_confidence: np.ndarray | None = None           # bool per eigenvalue

    def to_json(self) -> dict:
        out = {
            "mean": self.mean.tolist(),
            "variance": self.variance.tolist(),
            "regimes": list(self.regimes),
            "reliability": float(self.reliability),
            "subspace_bounds": [float(b) for b in self.subspace_bounds],
            "warning": bool(self.warning),
        }
        if self.reduced_confidence is not None:
            out["reduced_confidence"] = self.reduced_confidence.tolist()
        if self.clusters is not None:
            out["cluster_assignment"] = self.clusters.assignment.tolist()
        return out

    def to_json_str(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def sensitivities(decomp: SpectralDecomposition, model: ParametricModel) -> SensitivityTable:
    """Hellmann-Feynman first-order table for every correction direction.

    Requires a reliable decomposition; callers holding an unreliable one
    should route through :func:`propagate_adaptive` instead.
    """
    if not decomp.reliable:
        raise ValueError(
            "decomposition is unreliable; use propagate_adaptive for "
            "regime-aware handling instead of raw sensitivities")
    v = decomp.eigenvectors
    cols = [np.einsum("ij,ij->j", v, b @ v) for b in model.corrections]
    table = np.stack(cols, axis=1)
    return SensitivityTable(first_order=table,
                            unreliable_rows=decomp.low_confidence.copy(),
                            decomposition=decomp)


def effective_gap(delta: float, n_data: int, c_alpha: float) -> float:
    """Gap floored by the regularizer alpha_N = C_alpha * N^(-1/3)."""
    return max(float(delta), c_alpha * float(n_data) ** (-1.0 / 3.0))


def _check_psd(cov: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim == 0:
        cov = cov.reshape(1, 1)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError(f"covariance must be square, got shape {cov.shape}")
    if np.max(np.abs(cov - cov.T)) > tol * max(1.0, np.max(np.abs(cov))):
        raise ValueError("covariance is not symmetric")
    w = np.linalg.eigvalsh((cov + cov.T) / 2.0)
    if w.min() < -tol * max(1.0, w.max(), 0.0):
        raise ValueError(f"covariance is not PSD (min eigenvalue {w.min():.3g})")
    return (cov + cov.T) / 2.0


def propagate_gaussian(decomp: SpectralDecomposition, model: ParametricModel,
                       mean_w, cov_w, n_data: int, c_alpha: float = 1.0) -> PropagatedUncertainty:
    """Second-order moment propagation of w ~ N(mean_w, cov_w) into eigenvalues.

    mean_i  = lam_i + s_i . mean_w + 1/2 tr(H_i cov_w)
    var_i   = s_i^T cov_w s_i + 1/2 tr((H_i cov_w)^2)

    where H_i is the Rayleigh-Schroedinger curvature with denominators
    sign(lam_i - lam_j) * max(|lam_i - lam_j|, alpha_N).
    """
    cov = _check_psd(cov_w)
    m = model.n_corrections
    if cov.shape[0] != m:
        raise ValueError(f"covariance is {cov.shape[0]}x{cov.shape[0]}, model has M={m}")
    mean_w = np.atleast_1d(np.asarray(mean_w, dtype=np.float64))
    if mean_w.shape != (m,):
        raise ValueError(f"mean_w has length {mean_w.size}, expected {m}")

    lam = decomp.eigenvalues
    v = decomp.eigenvectors
    n = lam.size
    alpha = c_alpha * float(n_data) ** (-1.0 / 3.0)

    # G[m] = V^T B_m V in the eigenbasis; diagonal is the sensitivity table.
    g = np.stack([v.T @ (b @ v) for b in model.corrections])
    s = g[:, np.arange(n), np.arange(n)].T     # n x M

    # Regularized denominators, shared across i: d[i, j] with sign kept.
    diff = lam[:, None] - lam[None, :]
    sign = np.where(diff >= 0.0, 1.0, -1.0)
    denom = sign * np.maximum(np.abs(diff), alpha)

    mean = lam + s @ mean_w
    variance = np.einsum("im,mk,ik->i", s, cov, s)
    for i in range(n):
        mask = np.ones(n, dtype=bool)
        mask[i] = False
        # H_i[k, l] = 2 sum_{j != i} G[k][i, j] G[l][j, i] / denom[i, j]
        gi = g[:, i, :][:, mask]               # M x (n-1)
        h = 2.0 * (gi / denom[i, mask]) @ gi.T
        hc = h @ cov
        mean[i] += 0.5 * np.trace(hc)
        variance[i] += 0.5 * np.sum(hc * hc.T)

    variance = np.maximum(variance, 0.0)
    return PropagatedUncertainty(mean=mean, variance=variance)


def subspace_bound(cluster_external_gap: float, theta_norm: float,
                   max_coupling_norm: float) -> float:
    """First-order Grassmannian bound ||theta|| * max_k ||P_k|| / delta_ext."""
    if not cluster_external_gap > 0.0:
        raise ValueError("external gap must be positive for the subspace bound")
    if np.isinf(cluster_external_gap):
        return 0.0
    return float(theta_norm) * float(max_coupling_norm) / float(cluster_external_gap)


def propagate_adaptive(p: Matrix, model: ParametricModel, cov_w,
                       tau_num: float, n_data: int, *,
                       cluster_scale: float = 1.0) -> PropagatedUncertainty:
    """Regime-aware propagation with failure detection.

    Clusters the spectrum, then per cluster:

    - delta_int < tau_num: numerical degeneracy. Only the subspace bound is
      trustworthy; member eigenvalues get the conservative variance proxy
      (bound * cluster spread)^2 and a reduced-confidence flag.
    - delta_ext < sqrt(tr cov_w): statistical degeneracy, regularized
      propagation with effective gaps.
    - otherwise: well separated, standard propagation.

    reliability = min over clusters of min(delta_ext / sqrt(tr cov), 1); a
    warning is set below 0.5.
    """
    cov = _check_psd(cov_w)
    decomp = eig_adaptive(p)
    clusters = cluster(decomp.eigenvalues, tau_num, n_data, scale_c=cluster_scale)

    sigma_scale = float(np.sqrt(max(np.trace(cov), 0.0)))
    max_norm = max(float(np.linalg.norm(b, 2)) for b in model.corrections)

    base = propagate_gaussian(decomp, model, np.zeros(model.n_corrections),
                              cov, n_data)
    mean = base.mean.copy()
    variance = base.variance.copy()
    regimes: list[str] = []
    bounds: list[float] = []
    reduced = np.zeros(decomp.n, dtype=bool)
    reliability = 1.0

    for c in range(clusters.n_clusters):
        members = clusters.members(c)
        d_int = clusters.internal_gap[c]
        d_ext = clusters.external_gap[c]
        if np.isinf(d_ext):
            bound = 0.0
            ratio = 1.0
        else:
            bound = subspace_bound(d_ext, sigma_scale, max_norm)
            ratio = 1.0 if sigma_scale == 0.0 else min(d_ext / sigma_scale, 1.0)
        reliability = min(reliability, ratio)
        bounds.append(bound)

        # A singleton has no internal structure; the degeneracy test only
        # applies to clusters of numerically coincident eigenvalues.
        if members.size >= 2 and d_int < tau_num:
            regimes.append(Regime.NUMERICAL_DEGENERACY.value)
            spread = float(d_int)
            variance[members] = (bound * spread) ** 2
            mean[members] = decomp.eigenvalues[members]
            reduced[members] = True
        elif d_ext < sigma_scale:
            regimes.append(Regime.STATISTICAL_DEGENERACY.value)
        else:
            regimes.append(Regime.WELL_SEPARATED.value)

    return PropagatedUncertainty(
        mean=mean, variance=variance, regimes=regimes,
        reliability=float(reliability), subspace_bounds=bounds,
        clusters=clusters, warning=reliability < WARN_RELIABILITY,
        reduced_confidence=reduced)


def budgeted_variance(sens, variances, budget: int) -> tuple[float, float]:
    """Cost-controlled variance accumulation over sensitivity-ordered modes.

    Modes are visited in decreasing |s_i| * sqrt(Var_i); after each step the
    tail is bounded by R_k = (sum of remaining s^2) * median(remaining Var)
    and accumulation stops once R_k is within 1% of the running total (or the
    budget / spectrum is exhausted). Returns (total, confidence = k/n).
    """
    s = np.atleast_1d(np.asarray(sens, dtype=np.float64))
    var = np.atleast_1d(np.asarray(variances, dtype=np.float64))
    if s.size == 0 or s.shape != var.shape:
        raise ValueError("sensitivities and variances must be nonempty and congruent")
    if budget < 1:
        raise ValueError("budget must be a positive integer")
    n = s.size
    order = np.argsort(-(np.abs(s) * np.sqrt(np.maximum(var, 0.0))), kind="stable")
    s2 = s[order] ** 2
    v_ord = var[order]

    acc = 0.0
    remainder = 0.0
    k = 0
    while k < n:
        acc += s2[k] * v_ord[k]
        k += 1
        tail_s2 = float(np.sum(s2[k:]))
        tail_med = float(np.median(v_ord[k:])) if k < n else 0.0
        remainder = tail_s2 * tail_med
        if remainder <= 0.01 * acc or k >= n or k >= budget:
            break
    return acc + remainder, k / n
