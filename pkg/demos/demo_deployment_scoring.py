"""Walkthrough: deciding whether this method fits a problem before running it.

Run:  python demos/demo_deployment_scoring.py
"""

import numpy as np

from spectral_uq import (RegimeSpec, cond_estimate, deployment_score,
                         eig_adaptive, feasibility_check, gen_regime)

# --- 1. Worked score examples ------------------------------------------------
for n_data, n, delta, eps, kappa in [
    (10_000, 50, 1e-1, 1e-4, 1e4),     # plenty of data, easy spectrum
    (10_000, 50, 1e-2, 1e-3, 1e4),     # an order less of everything
    (500, 100, 1e-5, 1e-3, 1e9),       # starved and ill-conditioned
]:
    score, band = deployment_score(n_data, n, delta, eps, kappa)
    print(f"N={n_data:6d} n={n:3d} delta={delta:g} eps={eps:g} kappa={kappa:g}"
          f"  ->  score {score:8.3f}  {band}")

# --- 2. Feasibility audit of a generated problem -----------------------------
spec = RegimeSpec(regime="well_separated", n=12, n_problems=60, split=(40, 20),
                  seed=0)
model, train_set, _, meta = gen_regime(spec)
decomp = eig_adaptive(model.base)
verdict = feasibility_check(
    n=model.n,
    n_data=len(train_set) * model.n,
    gaps=decomp.gaps,
    p_norm=float(np.abs(decomp.eigenvalues).max()),
    kappa=cond_estimate(model.base),
    sigma=meta["sigma_obs"],
)
print("\nfeasibility verdict:")
for name in ("scale", "data", "spectral", "numerical", "signal"):
    print(f"  {name:10s}", getattr(verdict, name))
print("  overall   ", verdict.overall)
print("  measured  ", {k: round(v, 4) if isinstance(v, float) else v
                       for k, v in verdict.measured.items()})
