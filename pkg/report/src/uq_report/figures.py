"""Figure rendering from result bundles.

All figures are pure views of bundle contents: metric values come straight
from the CSV rows, and the reliability diagram is drawn from the per-sample
records. The only derived quantities are plot geometry (empirical coverage
of the drawn curve, the annotated gap area, and the power-law fit line),
which exist only inside the figures.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .bundle import ResultsBundle, SampleRecord  # noqa: E402

log = logging.getLogger("uq_report")

_NORMAL_QUANTILE_GRID = 512


def _norm_ppf(p: np.ndarray) -> np.ndarray:
    # Acklam-style rational approximation; avoids a scipy dependency for
    # the one quantile the diagram needs.
    a = [-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00]
    b = [-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01]
    c = [-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00]
    d = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00]
    p = np.asarray(p, dtype=float)
    out = np.empty_like(p)
    lo = p < 0.02425
    hi = p > 1 - 0.02425
    mid = ~(lo | hi)
    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        out[mid] = ((((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r
                     + a[5]) * q
                    / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r
                       + 1.0))
    if np.any(lo):
        q = np.sqrt(-2 * np.log(p[lo]))
        out[lo] = ((((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q
                    + c[5])
                   / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0))
    if np.any(hi):
        q = np.sqrt(-2 * np.log(1 - p[hi]))
        out[hi] = -((((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q
                     + c[5])
                    / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0))
    return out


def reliability_curve(samples: list[SampleRecord], levels=None):
    """Nominal central-interval levels vs empirical coverage of the records."""
    if levels is None:
        levels = np.linspace(0.05, 0.95, 19)
    z = []
    for rec in samples:
        mean = np.asarray(rec.mean)
        var = np.asarray(rec.total_var)
        y = np.asarray(rec.observed)
        z.append((y - mean) / np.sqrt(var))
    z = np.abs(np.concatenate(z))
    thresholds = _norm_ppf((1.0 + np.asarray(levels)) / 2.0)
    empirical = np.array([(z <= t).mean() for t in thresholds])
    return np.asarray(levels), empirical


def render_reliability(bundle: ResultsBundle, out: str | Path) -> Path | None:
    """Reliability diagram with diagonal reference and annotated gap area.

    Requires per-sample records; without them the render is skipped with a
    warning (and no file is produced).
    """
    if not bundle.samples:
        log.warning("no per-sample records in bundle; skipping reliability diagram")
        return None
    out = Path(out)
    levels, empirical = reliability_curve(bundle.samples)
    gap_area = float(np.trapezoid(np.abs(empirical - levels), levels))

    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot([0, 1], [0, 1], "k--", lw=1, label="perfect calibration")
    ax.plot(levels, empirical, "o-", color="tab:blue", label="observed")
    ax.fill_between(levels, levels, empirical, alpha=0.2, color="tab:red")
    ax.annotate(f"calibration-gap area = {gap_area:.4f}", xy=(0.05, 0.92),
                xycoords="axes fraction")
    ax.set_xlabel("nominal central coverage")
    ax.set_ylabel("empirical coverage")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.legend(loc="lower right")
    ax.set_title("Reliability diagram")
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def fit_power_law(ns, values) -> tuple[float, float]:
    """Least-squares fit of values ~ c * n^exponent; returns (exponent, c)."""
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    if ns.size < 2 or np.unique(ns).size < 2:
        raise ValueError("power-law fit needs at least two distinct n values")
    slope, intercept = np.polyfit(np.log(ns), np.log(values), 1)
    return float(slope), float(math.exp(intercept))


def render_scaling(bundle: ResultsBundle, out_dir: str | Path) -> list[Path]:
    """Log-log RMSE-vs-n plot (with power-law fit when possible), an ECE
    heatmap over (method, n), and coverage bars per configuration."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [r for r in bundle.all_rows() if r.has("rmse") and r.has("n")]
    if not rows:
        log.warning("no rmse/n rows in bundle; skipping scaling plots")
        return []
    written: list[Path] = []

    by_method: dict[str, list] = {}
    for r in rows:
        by_method.setdefault(r.method, []).append((r.value("n"), r.value("rmse")))

    fig, ax = plt.subplots(figsize=(6, 4.5))
    fitted = None
    for method, pts in sorted(by_method.items()):
        pts = sorted(pts)
        ns = np.array([p[0] for p in pts])
        vals = np.array([p[1] for p in pts])
        ax.loglog(ns, vals, "o", label=method)
        if np.unique(ns).size >= 2 and method == rows[0].method:
            exponent, c = fit_power_law(ns, vals)
            fitted = exponent
            grid = np.linspace(ns.min(), ns.max(), 50)
            ax.loglog(grid, c * grid ** exponent, "-", alpha=0.7,
                      label=f"{method} fit: n^{exponent:.2f}")
    ax.set_xlabel("matrix dimension n")
    ax.set_ylabel("RMSE")
    title = "RMSE scaling"
    if fitted is not None:
        title += f" (fitted exponent {fitted:.2f})"
        print(f"power-law exponent: {fitted:.4f}")
    else:
        log.warning("single dimension value; scatter only, no fit")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    path = out_dir / "rmse_scaling.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    # ECE heatmap over (method, n)
    ece_rows = [r for r in bundle.all_rows() if r.has("ece") and r.has("n")]
    if ece_rows:
        methods = sorted({r.method for r in ece_rows})
        dims = sorted({r.value("n") for r in ece_rows})
        grid = np.full((len(methods), len(dims)), np.nan)
        for r in ece_rows:
            i = methods.index(r.method)
            j = dims.index(r.value("n"))
            cell = r.value("ece")
            grid[i, j] = cell if np.isnan(grid[i, j]) else max(grid[i, j], cell)
        fig, ax = plt.subplots(figsize=(6, 2 + 0.6 * len(methods)))
        im = ax.imshow(grid, aspect="auto", cmap="RdYlGn_r", vmin=0.0,
                       vmax=max(0.1, np.nanmax(grid)))
        ax.set_xticks(range(len(dims)), [f"{d:g}" for d in dims])
        ax.set_yticks(range(len(methods)), methods)
        ax.set_xlabel("matrix dimension n")
        ax.set_title("ECE by method and dimension")
        fig.colorbar(im, ax=ax, label="ECE")
        fig.tight_layout()
        path = out_dir / "ece_heatmap.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    # Coverage bars per configuration
    cov_rows = [r for r in bundle.rows
                if all(r.has(c) for c in ("cov68", "cov95", "cov99"))]
    if cov_rows:
        labels = [r.text("id") or f"row{i}" for i, r in enumerate(cov_rows)]
        x = np.arange(len(cov_rows))
        fig, ax = plt.subplots(figsize=(max(6, 0.8 * len(cov_rows)), 4))
        for off, (col, nominal) in enumerate((("cov68", 0.68), ("cov95", 0.95),
                                              ("cov99", 0.99))):
            vals = [r.value(col) for r in cov_rows]
            ax.bar(x + (off - 1) * 0.25, vals, width=0.25,
                   label=f"{col} (nominal {nominal})")
            ax.axhline(nominal, color="gray", lw=0.6, ls=":")
        ax.set_xticks(x, labels, rotation=30, ha="right", fontsize=7)
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("empirical coverage")
        ax.set_title("Coverage by configuration")
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / "coverage_bars.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def render_decomposition(bundle: ResultsBundle, out: str | Path) -> Path | None:
    """Per-eigenvalue epistemic/aleatoric/total uncertainty curves from the
    per-sample records; skipped when the bundle has none."""
    if not bundle.samples:
        log.warning("no per-sample records; skipping uncertainty decomposition")
        return None
    out = Path(out)
    epi = np.mean([rec.epistemic_var for rec in bundle.samples
                   if rec.epistemic_var], axis=0)
    ale = float(np.mean([rec.aleatoric_var for rec in bundle.samples]))
    total = epi + ale
    idx = np.arange(1, epi.size + 1)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(idx, np.sqrt(epi), "o-", label="epistemic")
    ax.semilogy(idx, np.full(epi.size, math.sqrt(ale)), "--", label="aleatoric")
    ax.semilogy(idx, np.sqrt(total), "s-", label="total")
    ax.set_xlabel("eigenvalue index")
    ax.set_ylabel("predictive standard deviation")
    ax.set_title("Uncertainty decomposition")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out
