"""Spectral estimation and the linear preprocessing applied before training.

Preprocessing is PCA (rotation onto variance-ordered axes) followed by an
affine per-channel map of the training range onto [-1, 1].  Both are
scikit-learn style transformers so they can sit in a ``Pipeline``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .series import TimeSeriesMatrix


@dataclass(frozen=True)
class PsdMatrix:
    """One-sided PSD per channel on a shared grid (units^2 / Hz)."""

    freqs: np.ndarray
    psd: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        p = np.asarray(self.psd, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if p.shape[0] != f.shape[0]:
            raise ValueError("psd rows must match the frequency grid")
        if f[0] != 0 or np.any(np.diff(f) <= 0):
            raise ValueError("frequency grid must start at 0 and increase strictly")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("psd values must be finite and non-negative")
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "psd", p)

    @property
    def df(self) -> float:
        return float(self.freqs[1] - self.freqs[0])

    def integrated(self) -> np.ndarray:
        """Sum of psd * df per channel (approximately the channel variance)."""
        return self.psd.sum(axis=0) * self.df

    def peak_frequencies(self) -> np.ndarray:
        return self.freqs[np.argmax(self.psd, axis=0)]


def welch_psd(x, fs=None, segment_len=1024, overlap_fraction=0.5, window="hann"):
    """Welch estimate for every channel of ``x``.

    ``x`` is a :class:`TimeSeriesMatrix` or an array (then ``fs`` is needed).
    Each segment has its mean removed.  When ``x`` holds several stacked
    records, each record is estimated separately and the PSDs are averaged.
    """
    if not isinstance(x, TimeSeriesMatrix):
        if fs is None:
            raise ValueError("fs is required for plain arrays")
        x = TimeSeriesMatrix(np.asarray(x), fs, "displacement")
    segment_len = int(segment_len)
    if segment_len < 2 or segment_len & (segment_len - 1):
        raise ValueError(f"segment_len must be a power of two, got {segment_len}")
    if not 0 <= overlap_fraction < 1:
        raise ValueError("overlap_fraction must lie in [0, 1)")
    noverlap = int(segment_len * overlap_fraction)

    estimates = []
    for rec in x.records():
        if segment_len > rec.shape[0]:
            raise ValueError(f"segment_len {segment_len} exceeds record length {rec.shape[0]}")
        freqs, pxx = sps.welch(
            rec, fs=x.fs, window=window, nperseg=segment_len, noverlap=noverlap,
            detrend="constant", return_onesided=True, scaling="density", axis=0,
        )
        estimates.append(pxx)
    return PsdMatrix(freqs, np.mean(estimates, axis=0))


class CovariancePCA(TransformerMixin, BaseEstimator):
    """PCA from the eigendecomposition of the sample covariance.

    Attributes
    ----------
    mean_ : ndarray of shape (n_channels,)
    components_ : ndarray of shape (n_channels, n_channels)
        Eigenvectors stored as *columns*, in descending eigenvalue order. The
        largest-magnitude entry of each column is positive.
    eigenvalues_ : ndarray of shape (n_channels,)
    """

    def fit(self, X, y=None):
        X = validate_data(self, _as_array(X), ensure_min_samples=2)
        n, d = X.shape
        if n <= d:
            raise ValueError(f"need more samples than channels, got {n} x {d}")
        self.mean_ = X.mean(axis=0)
        cov = np.atleast_2d(np.cov(X - self.mean_, rowvar=False))
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1]
        evals, evecs = evals[order], evecs[:, order]
        if np.any(evals <= 1e-12 * max(evals[0], 1e-300)):
            warnings.warn("covariance is rank deficient; small eigenvalues clamped to 0",
                          RuntimeWarning, stacklevel=2)
        evals = np.clip(evals, 0.0, None)
        pivot = np.argmax(np.abs(evecs), axis=0)
        signs = np.sign(evecs[pivot, np.arange(d)])
        self.components_ = evecs * signs
        self.eigenvalues_ = evals
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = self._check_width(X)
        return (X - self.mean_) @ self.components_

    def inverse_transform(self, X):
        check_is_fitted(self, "components_")
        X = self._check_width(X)
        return X @ self.components_.T + self.mean_

    def _check_width(self, X):
        return validate_data(self, _as_array(X), reset=False)


class SymmetricScaler(TransformerMixin, BaseEstimator):
    """Affine per-channel map sending the fitted (min, max) onto (-1, 1).

    Values outside the fitted range are mapped linearly, never clipped.
    """

    def fit(self, X, y=None):
        X = validate_data(self, _as_array(X), ensure_min_samples=2)
        self.data_min_ = X.min(axis=0)
        self.data_max_ = X.max(axis=0)
        const = np.flatnonzero(self.data_max_ <= self.data_min_)
        if const.size:
            raise ValueError(f"channel(s) {const.tolist()} are constant; cannot scale")
        return self

    def transform(self, X):
        check_is_fitted(self, "data_min_")
        X = self._check_width(X)
        return 2.0 * (X - self.data_min_) / (self.data_max_ - self.data_min_) - 1.0

    def inverse_transform(self, X):
        check_is_fitted(self, "data_min_")
        X = self._check_width(X)
        return (X + 1.0) * 0.5 * (self.data_max_ - self.data_min_) + self.data_min_

    def _check_width(self, X):
        return validate_data(self, _as_array(X), reset=False)


def _as_array(X):
    return X.data if isinstance(X, TimeSeriesMatrix) else X


# functional aliases

def fit_pca(x) -> CovariancePCA:
    return CovariancePCA().fit(x)


def pca_transform(model: CovariancePCA, x):
    return model.transform(x)


def pca_inverse(model: CovariancePCA, scores):
    return model.inverse_transform(scores)


def fit_scaler(scores) -> SymmetricScaler:
    return SymmetricScaler().fit(scores)


def scale(model: SymmetricScaler, scores):
    return model.transform(scores)


def unscale(model: SymmetricScaler, scaled):
    return model.inverse_transform(scaled)
