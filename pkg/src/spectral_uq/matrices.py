"""Real symmetric matrices and affine parametric models built from them.

A "symmetric matrix" throughout this package is a dense float64 ndarray that
has passed :func:`symmetric`: finite entries and exact symmetry (enforced by
averaging with the transpose, which makes ``A[i, j] == A[j, i]`` hold exactly
in floating point).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

Matrix = NDArray[np.float64]


class DimensionError(ValueError):
    """Shapes of inputs do not match the model."""


def symmetric(entries, *, name: str = "matrix") -> Matrix:
    """Validate and symmetrize a dense square array.

    Parameters
    ----------
    entries : array_like
        Square array of reals.
    name : str
        Label used in error messages.

    Returns
    -------
    ndarray
        float64 array with ``A == A.T`` exactly and all entries finite.
    """
    a = np.asarray(entries, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return (a + a.T) / 2.0


def is_symmetric(a: Matrix, rtol: float = 0.0) -> bool:
    """True if ``a`` is symmetric within relative tolerance ``rtol``."""
    scale = max(np.max(np.abs(a)), 1e-300)
    return bool(np.max(np.abs(a - a.T)) <= rtol * scale)


@dataclass(frozen=True)
class ParametricModel:
    """Affine family P(x; w) = base + sum_k x_k couplings[k] + sum_m w_m corrections[m].

    ``x`` holds observed per-sample inputs; ``w`` holds latent global
    corrections that carry the posterior. All member matrices are n x n
    symmetric; at least one correction matrix is required.
    """

    base: Matrix
    couplings: list[Matrix] = field(default_factory=list)
    corrections: list[Matrix] = field(default_factory=list)

    def __post_init__(self):
        base = symmetric(self.base, name="base")
        object.__setattr__(self, "base", base)
        n = base.shape[0]
        coup = []
        for k, p in enumerate(self.couplings):
            p = symmetric(p, name=f"couplings[{k}]")
            if p.shape[0] != n:
                raise DimensionError(f"couplings[{k}] is {p.shape[0]}x{p.shape[0]}, expected {n}x{n}")
            coup.append(p)
        corr = []
        for m, b in enumerate(self.corrections):
            b = symmetric(b, name=f"corrections[{m}]")
            if b.shape[0] != n:
                raise DimensionError(f"corrections[{m}] is {b.shape[0]}x{b.shape[0]}, expected {n}x{n}")
            corr.append(b)
        if not corr:
            raise ValueError("model requires at least one correction matrix")
        object.__setattr__(self, "couplings", coup)
        object.__setattr__(self, "corrections", corr)

    @property
    def n(self) -> int:
        return self.base.shape[0]

    @property
    def n_inputs(self) -> int:
        return len(self.couplings)

    @property
    def n_corrections(self) -> int:
        return len(self.corrections)


def assemble(model: ParametricModel, x, w) -> Matrix:
    """Evaluate P(x; w), symmetrized.

    Raises on length mismatches or non-finite inputs. Affine in (x, w).
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    w = np.atleast_1d(np.asarray(w, dtype=np.float64))
    if x.shape != (model.n_inputs,):
        raise DimensionError(f"x has length {x.size}, model expects {model.n_inputs}")
    if w.shape != (model.n_corrections,):
        raise DimensionError(f"w has length {w.size}, model expects {model.n_corrections}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
        raise ValueError("non-finite parameter values")
    p = model.base.copy()
    for xk, pk in zip(x, model.couplings):
        p += xk * pk
    for wm, bm in zip(w, model.corrections):
        p += wm * bm
    return (p + p.T) / 2.0


def assemble_batch(model: ParametricModel, x_batch, w) -> Matrix:
    """Assemble P(x; w) for a batch of inputs, returning shape (N, n, n)."""
    x_batch = np.asarray(x_batch, dtype=np.float64)
    if x_batch.ndim != 2 or x_batch.shape[1] != model.n_inputs:
        raise DimensionError(f"x batch shape {x_batch.shape} incompatible with K={model.n_inputs}")
    w = np.asarray(w, dtype=np.float64)
    p = np.broadcast_to(model.base, (x_batch.shape[0],) + model.base.shape).copy()
    if model.couplings:
        coup = np.stack(model.couplings)
        p += np.einsum("nk,kij->nij", x_batch, coup)
    corr = np.stack(model.corrections)
    p += np.tensordot(w, corr, axes=1)
    return (p + p.transpose(0, 2, 1)) / 2.0


# ---------------------------------------------------------------------------
# JSON wire format: {"n": int, "rows": [[...], ...]}, full row-major storage.
# ---------------------------------------------------------------------------

def matrix_to_json(a: Matrix) -> dict:
    return {"n": int(a.shape[0]), "rows": a.tolist()}


def matrix_from_json(obj: dict, *, name: str = "matrix", rtol: float = 1e-12) -> Matrix:
    """Parse the wire format; verify symmetry within ``rtol`` relative, then symmetrize."""
    try:
        n = int(obj["n"])
        rows = obj["rows"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{name}: expected object with 'n' and 'rows'") from exc
    a = np.asarray(rows, dtype=np.float64)
    if a.shape != (n, n):
        raise DimensionError(f"{name}: rows have shape {a.shape}, expected ({n}, {n})")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    if not is_symmetric(a, rtol=rtol):
        raise ValueError(f"{name} is not symmetric within {rtol:g} relative tolerance")
    return (a + a.T) / 2.0


def model_to_json(model: ParametricModel) -> dict:
    return {
        "n": model.n,
        "base": matrix_to_json(model.base),
        "couplings": [matrix_to_json(p) for p in model.couplings],
        "corrections": [matrix_to_json(b) for b in model.corrections],
    }


def model_from_json(obj: dict) -> ParametricModel:
    return ParametricModel(
        base=matrix_from_json(obj["base"], name="base"),
        couplings=[matrix_from_json(p, name=f"couplings[{k}]")
                   for k, p in enumerate(obj.get("couplings", []))],
        corrections=[matrix_from_json(b, name=f"corrections[{m}]")
                     for m, b in enumerate(obj.get("corrections", []))],
    )


def save_model(model: ParametricModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_json(model), sort_keys=True))


def load_model(path: str | Path) -> ParametricModel:
    return model_from_json(json.loads(Path(path).read_text()))
