"""Reconstruction error and dependence measures for modal coordinates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CorrelationMatrix:
    kind: str
    values: np.ndarray
    n_used: int

    @property
    def labels(self):
        return [f"u{i + 1}" for i in range(self.values.shape[0])]

    def max_off_diagonal(self, absolute=True) -> float:
        v = np.abs(self.values) if absolute else self.values
        d = v.shape[0]
        if d < 2:
            return 0.0
        return float(v[~np.eye(d, dtype=bool)].max())


def nmse(y_hat, y) -> float:
    """Normalised mean-square error in percent, pooled over all channels.

    ``100 / (N var(y)) * sum((y_hat - y)^2)`` with the population variance of
    every sample of ``y``; predicting the mean scores exactly 100.
    """
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if y_hat.shape != y.shape:
        raise ValueError(f"length mismatch: {y_hat.size} vs {y.size}")
    var = np.var(y)
    if var == 0:
        raise ValueError("target is constant; NMSE undefined")
    return float(100.0 * np.mean((y_hat - y) ** 2) / var)


def pearson_matrix(coords) -> CorrelationMatrix:
    X = np.asarray(coords, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise ValueError("need at least 2 observations")
    const = np.flatnonzero(X.std(axis=0) == 0)
    if const.size:
        raise ValueError(f"column {int(const[0])} is constant")
    R = np.atleast_2d(np.corrcoef(X, rowvar=False))
    R = np.clip(0.5 * (R + R.T), -1.0, 1.0)
    np.fill_diagonal(R, 1.0)
    return CorrelationMatrix("pearson", R, X.shape[0])


def _centered_distances(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    diff = x[:, None, :] - x[None, :, :]
    a = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    row = a.mean(axis=1, keepdims=True)
    col = a.mean(axis=0, keepdims=True)
    return a - row - col + a.mean()


def _dcor_from_centered(A, B, vA=None, vB=None) -> float:
    vA = np.mean(A * A) if vA is None else vA
    vB = np.mean(B * B) if vB is None else vB
    if vA <= 0 or vB <= 0:
        return 0.0
    cov2 = max(float(np.mean(A * B)), 0.0)
    return float(np.sqrt(cov2 / np.sqrt(vA * vB)))


def distance_correlation(x, y) -> float:
    """Sample distance correlation from double-centred distance matrices.

    Direct O(n^2) computation: ``dCov^2 = mean(A * B)`` and
    ``dCor = dCov / sqrt(dVar_x dVar_y)``.  Returns 0 when either variable is
    constant.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] < 2:
        raise ValueError("need at least 2 observations")
    return _dcor_from_centered(_centered_distances(x), _centered_distances(y))


def dcor_matrix(coords, subsample=2000, seed=0) -> CorrelationMatrix:
    """Pairwise distance correlation on a random subsample of rows.

    Rows are drawn without replacement; if ``subsample`` exceeds the number of
    rows, every row is used.  ``n_used`` records the size actually used.
    """
    X = np.asarray(coords, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if subsample < 2:
        raise ValueError("subsample must be at least 2")
    n, d = X.shape
    if subsample < n:
        idx = np.sort(np.random.default_rng(seed).choice(n, size=subsample, replace=False))
        X = X[idx]
    centered = [_centered_distances(X[:, j]) for j in range(d)]
    dvar = [float(np.mean(A * A)) for A in centered]
    R = np.eye(d)
    for i in range(d):
        R[i, i] = _dcor_from_centered(centered[i], centered[i], dvar[i], dvar[i])
        for j in range(i + 1, d):
            R[i, j] = R[j, i] = _dcor_from_centered(centered[i], centered[j], dvar[i], dvar[j])
    return CorrelationMatrix("distance", R, X.shape[0])
