from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # k x d, orthonormal rows
    explained_variance: np.ndarray  # descending


def pca_fit(X, k: int) -> PcaModel:
    """Top-k eigenvectors of the sample covariance.

    Each component's sign is fixed so its largest-magnitude entry is
    positive, which makes projections reproducible across runs.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if not 1 <= k <= d:
        raise ValueError(f"k must be in [1, {d}], got {k}")
    if n < k:
        raise ValueError(f"need at least k={k} rows, got {n}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / max(n - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:k]
    comps = evecs[:, order].T
    flip = np.sign(comps[np.arange(k), np.argmax(np.abs(comps), axis=1)])
    flip[flip == 0] = 1.0
    comps = comps * flip[:, None]
    return PcaModel(mean, comps, np.clip(evals[order], 0.0, None))


def pca_project(model: PcaModel, X) -> np.ndarray:
    return (np.asarray(X, dtype=float) - model.mean) @ model.components.T
