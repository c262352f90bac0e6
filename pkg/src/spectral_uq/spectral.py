"""Tiered symmetric eigendecomposition, randomized approximation, clustering.

Solver tiers are selected from a 1-norm condition estimate: below 1e8 the
standard dense solver runs, below 1e12 the expert (bisection) driver, and
beyond that the matrix is shifted by the median of its diagonal before
solving. A failed reconstruction check falls back to the randomized
range-finder and the result is marked unreliable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh, lapack

from .matrices import Matrix

EPS = float(np.finfo(np.float64).eps)

# Jitter escalation used when a downstream solve produces non-finite output.
# Results obtained past 1e-6 are flagged degraded.
REGULARIZATION_LADDER = (1e-10, 1e-8, 1e-6, 1e-4, 1e-3)
DEGRADED_ABOVE = 1e-6


class SpectralError(RuntimeError):
    """Eigendecomposition failed beyond recovery."""


def cond_estimate(p: Matrix) -> float:
    """1-norm condition estimate kappa = ||P||_1 * ||P^-1||_1.

    Uses the LAPACK reciprocal-condition estimator on an LU factorization;
    singular (or numerically singular) input yields +inf rather than an error.
    """
    p = np.asarray(p, dtype=np.float64)
    if not np.all(np.isfinite(p)):
        raise ValueError("matrix contains non-finite entries")
    anorm = np.linalg.norm(p, 1)
    if anorm == 0.0:
        return np.inf
    lu, _, info = lapack.dgetrf(p)
    if info != 0:
        return np.inf
    rcond, info = lapack.dgecon(lu, anorm, norm="1")
    if info != 0 or rcond <= 0.0 or not np.isfinite(rcond):
        return np.inf
    return float(1.0 / rcond)


def _pairwise_gaps(eigenvalues: np.ndarray) -> np.ndarray:
    """gaps[i] = min_{j != i} |lam_i - lam_j| for a sorted spectrum."""
    lam = np.asarray(eigenvalues, dtype=np.float64)
    n = lam.size
    if n == 1:
        return np.array([np.inf])
    diffs = np.abs(np.diff(lam))
    gaps = np.empty(n)
    gaps[0] = diffs[0]
    gaps[-1] = diffs[-1]
    if n > 2:
        gaps[1:-1] = np.minimum(diffs[:-1], diffs[1:])
    return gaps


@dataclass
class SpectralDecomposition:
    """Eigendecomposition with solver provenance and per-eigenvalue confidence."""

    eigenvalues: np.ndarray          # ascending
    eigenvectors: np.ndarray         # columns orthonormal when reliable
    gaps: np.ndarray                 # min distance to the rest of the spectrum
    precision_tier: str              # standard | enhanced | regularized | randomized
    reconstruction_error: float      # ||P - V L V^T||_F / ||P||_F
    orthogonality_error: float       # ||V^T V - I||_F
    tolerance: float                 # tau selected from the condition estimate
    cond: float
    low_confidence: np.ndarray       # bool per eigenvalue
    reliable: bool

    @property
    def n(self) -> int:
        return self.eigenvalues.size


@dataclass
class ApproxSpectrum:
    """Top-k approximate eigenpairs with an a posteriori residual bound."""

    eigenvalues: np.ndarray   # k entries, by descending magnitude
    eigenvectors: np.ndarray  # n x k, columns orthonormal
    residual_bound: float     # ||P V - V L||_F recomputed from returned factors
    used_rank: int            # sketch width k+p actually used


def _recon_error(p: Matrix, lam: np.ndarray, v: np.ndarray) -> float:
    pnorm = np.linalg.norm(p)
    if pnorm == 0.0:
        return 0.0
    return float(np.linalg.norm(p - (v * lam) @ v.T) / pnorm)


def eig_adaptive(p: Matrix, data_sigma: float = 0.0) -> SpectralDecomposition:
    """Decompose a symmetric matrix with condition-aware solver selection.

    Parameters
    ----------
    p : ndarray
        Symmetric matrix (validated finite; symmetrized defensively).
    data_sigma : float
        Observation noise scale for the per-eigenvalue SNR flag. Zero skips
        the SNR test.

    Notes
    -----
    The tolerance is tau = max(eps_machine * kappa, 1e-14); eigenvalues with
    gap below 100*tau, or |lam|/data_sigma < 1, are flagged low confidence.
    Reconstruction error above 100*tau triggers the randomized fallback and
    marks the result unreliable.
    """
    p = np.asarray(p, dtype=np.float64)
    if not np.all(np.isfinite(p)):
        raise ValueError("matrix contains non-finite entries")
    p = (p + p.T) / 2.0
    n = p.shape[0]

    kappa = cond_estimate(p)
    # Cap keeps tau meaningful for singular input (kappa = inf).
    tau = max(EPS * min(kappa, 1e16), 1e-14)

    if kappa < 1e8:
        lam, v = eigh(p, driver="evr")
        tier = "standard"
    elif kappa < 1e12:
        lam, v = eigh(p, driver="evx")
        tier = "enhanced"
    else:
        shift = float(np.median(np.diag(p)))
        lam, v = eigh(p - shift * np.eye(n), driver="evr")
        lam = lam + shift
        tier = "regularized"

    order = np.argsort(lam, kind="stable")
    lam, v = lam[order], v[:, order]

    recon = _recon_error(p, lam, v)
    orth = float(np.linalg.norm(v.T @ v - np.eye(n)))
    reliable = True

    if recon > 100.0 * tau:
        lam, v, ok = _randomized_full_fallback(p, lam, v)
        tier = "randomized"
        reliable = False
        recon = _recon_error(p, lam, v)
        orth = float(np.linalg.norm(v.T @ v - np.eye(n)))
        if not ok and not np.all(np.isfinite(lam)):
            raise SpectralError(
                f"eigendecomposition failed after randomized fallback "
                f"(cond={kappa:.3g}, reconstruction={recon:.3g})")

    gaps = _pairwise_gaps(lam)
    low = gaps < 100.0 * tau
    if data_sigma > 0.0:
        low = low | (np.abs(lam) / data_sigma < 1.0)

    return SpectralDecomposition(
        eigenvalues=lam, eigenvectors=v, gaps=gaps, precision_tier=tier,
        reconstruction_error=recon, orthogonality_error=orth, tolerance=tau,
        cond=kappa, low_confidence=low, reliable=reliable)


def _randomized_full_fallback(p: Matrix, lam0, v0):
    """Rebuild a full-size decomposition from a randomized sketch.

    The sketch covers the dominant subspace; the orthogonal complement is
    completed with Rayleigh quotients. Used only when the dense solve failed
    validation, and always reported unreliable.
    """
    n = p.shape[0]
    k = max(1, n // 2 - 1)
    if k + 1 >= n:
        return lam0, v0, False
    approx = eig_randomized(p, k=k, p=min(10, n - k - 1), tol=1e-10)
    vk = approx.eigenvectors
    rng = np.random.default_rng(0)
    basis = np.concatenate([vk, rng.standard_normal((n, n - vk.shape[1]))], axis=1)
    q, _ = np.linalg.qr(basis)
    q[:, :vk.shape[1]] = vk
    rest = q[:, vk.shape[1]:]
    lam_rest = np.einsum("ij,ij->j", rest, p @ rest)
    lam = np.concatenate([approx.eigenvalues, lam_rest])
    v = np.concatenate([vk, rest], axis=1)
    order = np.argsort(lam, kind="stable")
    return lam[order], v[:, order], True


def eig_randomized(p: Matrix, k: int, oversample: int = 10, tol: float = 1e-8,
                   seed: int = 0) -> ApproxSpectrum:
    """Randomized top-k eigenpairs with power iteration and rank doubling.

    A Gaussian sketch of width k+p (p = ``oversample``) is powered
    q = ceil(log(1/tol)/log(kappa)) times (clamped to [1, 20]),
    orthonormalized, and the restricted problem is solved exactly. While the
    residual exceeds ``tol`` and k+p < n/2 the oversampling doubles. The
    returned residual bound is recomputed from the truncated factors.
    """
    a = np.asarray(p, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains non-finite entries")
    a = (a + a.T) / 2.0
    n = a.shape[0]
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k + oversample >= n:
        raise ValueError(f"k + p = {k + oversample} must be < n = {n}")

    kappa = cond_estimate(a)
    if tol >= 1.0 or not math.isfinite(kappa):
        q = 1
    elif kappa <= 1.0:
        q = 20  # formula diverges near kappa = 1
    else:
        q = math.ceil(math.log(1.0 / tol) / math.log(kappa))
    q = min(max(q, 1), 20)

    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0xA5,)))
    over = oversample
    best: tuple[float, np.ndarray, np.ndarray, int] | None = None
    while True:
        width = k + over
        omega = rng.standard_normal((n, width))
        y = a @ omega
        # Re-orthonormalize between power steps; same range, stable in fp.
        for _ in range(q - 1):
            y, _ = np.linalg.qr(y)
            y = a @ y
        qmat, _ = np.linalg.qr(y)
        b = qmat.T @ a @ qmat
        b = (b + b.T) / 2.0
        lam_small, w_small = np.linalg.eigh(b)
        v_full = qmat @ w_small

        top = np.argsort(-np.abs(lam_small), kind="stable")[:k]
        lam_k = lam_small[top]
        v_k = v_full[:, top]
        resid = float(np.linalg.norm(a @ v_k - v_k * lam_k))

        if best is None or resid < best[0]:
            best = (resid, lam_k, v_k, width)
        if resid <= tol or k + over >= n / 2:
            break
        over *= 2
        if k + over >= n:
            over = n - 1 - k
            if over <= 0:
                break

    resid, lam_k, v_k, width = best
    return ApproxSpectrum(eigenvalues=lam_k, eigenvectors=v_k,
                          residual_bound=resid, used_rank=width)


@dataclass
class SpectralClusters:
    """Contiguous groups of eigenvalues closer than tau_n to their centroid."""

    assignment: np.ndarray     # cluster index per eigenvalue
    centroids: np.ndarray      # mean eigenvalue per cluster
    internal_gap: np.ndarray   # max intra-cluster spread (delta_int)
    external_gap: np.ndarray   # min distance to eigenvalues outside (delta_ext)
    tau_n: float

    @property
    def n_clusters(self) -> int:
        return self.centroids.size

    def members(self, c: int) -> np.ndarray:
        return np.nonzero(self.assignment == c)[0]


def cluster(eigenvalues, tau_num: float, n_data: int, scale_c: float = 1.0) -> SpectralClusters:
    """Adaptive spectral clustering with threshold tau_n = max(tau_num, C*sqrt(ln N / N)).

    A single left-to-right sweep over the sorted spectrum opens a new cluster
    whenever the next eigenvalue sits at least tau_n away from the running
    centroid; the centroid is updated incrementally as members join.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if lam.ndim != 1 or lam.size == 0:
        raise ValueError("eigenvalues must be a nonempty 1-d array")
    if np.any(np.diff(lam) < 0):
        raise ValueError("eigenvalues must be sorted ascending")
    if n_data < 2:
        raise ValueError("n_data must be >= 2")
    if tau_num <= 0:
        raise ValueError("tau_num must be positive")

    tau_n = max(tau_num, scale_c * math.sqrt(math.log(n_data) / n_data))

    assignment = np.zeros(lam.size, dtype=np.intp)
    centroid = lam[0]
    count = 1
    cidx = 0
    for i in range(1, lam.size):
        if abs(lam[i] - centroid) >= tau_n:
            cidx += 1
            centroid = lam[i]
            count = 1
        else:
            count += 1
            centroid += (lam[i] - centroid) / count
        assignment[i] = cidx

    n_clusters = cidx + 1
    centroids = np.empty(n_clusters)
    internal = np.empty(n_clusters)
    external = np.empty(n_clusters)
    for c in range(n_clusters):
        members = lam[assignment == c]
        outside = lam[assignment != c]
        centroids[c] = members.mean()
        internal[c] = members.max() - members.min()
        if outside.size == 0:
            external[c] = np.inf
        else:
            external[c] = np.min(np.abs(members[:, None] - outside[None, :]))

    return SpectralClusters(assignment=assignment, centroids=centroids,
                            internal_gap=internal, external_gap=external,
                            tau_n=tau_n)


@dataclass
class StabilityLog:
    """Record of what the stability guard observed and did."""

    frobenius_norm: float
    cond: float
    preconditioned: bool = False
    scale: np.ndarray | None = None   # diagonal of D when preconditioned
    events: list[str] = field(default_factory=list)

    def restore(self, guarded: np.ndarray) -> np.ndarray:
        """Invert the congruence transform: D^{1/2} M D^{1/2}.

        The guard rescales the matrix, not its spectrum, so callers map
        results back at the matrix level (eigenvalues of the guarded matrix
        are congruent, not equal, to the original ones).
        """
        if not self.preconditioned:
            return np.asarray(guarded)
        root = np.sqrt(self.scale)
        return np.asarray(guarded) * np.outer(root, root)


def stability_guard(p: Matrix) -> tuple[Matrix, StabilityLog]:
    """Precondition severely ill-conditioned matrices before decomposition.

    With kappa above 1e12 the matrix is rescaled D^{-1/2} P D^{-1/2} where
    D = diag(max(|P_ii|, 1e-12 ||P||_F)); the transform is logged so callers
    can map results back. Well-conditioned input passes through untouched.
    """
    p = np.asarray(p, dtype=np.float64)
    if not np.all(np.isfinite(p)):
        raise ValueError("matrix contains non-finite entries")
    fro = float(np.linalg.norm(p))
    kappa = cond_estimate(p)
    log = StabilityLog(frobenius_norm=fro, cond=kappa)
    if kappa <= 1e12:
        return p, log
    floor = 1e-12 * max(fro, 1e-300)
    d = np.maximum(np.abs(np.diag(p)), floor)
    scale = 1.0 / np.sqrt(d)
    guarded = p * np.outer(scale, scale)
    log.preconditioned = True
    log.scale = d
    log.events.append(f"preconditioned: cond={kappa:.3g} > 1e12")
    return guarded, log


def eig_with_ladder(p: Matrix, *, start: float = REGULARIZATION_LADDER[0],
                    vectors: bool = True):
    """Eigendecomposition with escalating jitter on non-finite results.

    Returns (eigenvalues, eigenvectors_or_None, events) where events lists
    the regularization rungs applied; rungs above 1e-6 append a 'degraded'
    marker. Raises SpectralError when the ladder is exhausted.
    """
    p = np.asarray(p, dtype=np.float64)
    if not np.all(np.isfinite(p)):
        raise ValueError("matrix contains non-finite entries")
    fro = float(np.linalg.norm(p))
    rungs = [0.0] + [r for r in sorted(set(REGULARIZATION_LADDER) | {start}) if r >= start]
    events: list[str] = []
    n = p.shape[0]
    for eps_reg in rungs:
        trial = p if eps_reg == 0.0 else p + eps_reg * max(fro, 1.0) * np.eye(n)
        try:
            if vectors:
                lam, v = np.linalg.eigh(trial)
            else:
                lam, v = np.linalg.eigvalsh(trial), None
        except np.linalg.LinAlgError:
            events.append(f"solver failure at eps_reg={eps_reg:g}")
            continue
        finite = np.all(np.isfinite(lam)) and (v is None or np.all(np.isfinite(v)))
        if finite:
            if eps_reg > 0.0:
                events.append(f"regularized with eps_reg={eps_reg:g}")
            if eps_reg > DEGRADED_ABOVE:
                events.append("degraded")
            return lam, v, events
        events.append(f"non-finite result at eps_reg={eps_reg:g}")
    raise SpectralError(f"eigendecomposition failed after ladder: {events}")
