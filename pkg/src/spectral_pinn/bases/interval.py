"""Sine basis sin(2*pi*k*x) on [0,1] with least-squares coefficient recovery."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ..exceptions import RankDeficientError
from ..validation import check_coeffs, check_samples

__all__ = ["SineBasis", "sine_eval", "sine_transform", "sine_reconstruct"]

TWO_PI = 2.0 * np.pi


def sine_eval(k: int, x) -> np.ndarray:
    """Value of the k-th basis function sin(2*pi*k*x); k >= 1."""
    if k < 1:
        raise ValueError("frequency index k starts at 1")
    return np.sin(TWO_PI * k * np.asarray(x, dtype=float))


class SineBasis(BaseEstimator, TransformerMixin):
    """Sine spectral transform on the uniform grid j/(L-1), j = 0..L-1.

    Parameters
    ----------
    n_frequencies : int, default=20
        Highest frequency K; coefficients are ordered k = 1..K.
    n_samples : int, default=101
        Grid size L.  Must satisfy L >= 2K + 1 so functions in the span
        are recovered exactly by least squares.
    """

    def __init__(self, n_frequencies: int = 20, n_samples: int = 101):
        self.n_frequencies = n_frequencies
        self.n_samples = n_samples

    # transformer API ------------------------------------------------------
    def fit(self, X=None, y=None):
        K, L = self.n_frequencies, self.n_samples
        if L < 2 * K + 1:
            raise ValueError(f"need L >= 2K+1 samples, got L={L}, K={K}")
        self.grid_ = np.arange(L) / (L - 1)
        self.design_ = np.sin(TWO_PI * np.outer(self.grid_, np.arange(1, K + 1)))
        if np.linalg.matrix_rank(self.design_) < K:
            raise RankDeficientError("sine design matrix is rank deficient")
        self.pinv_ = np.linalg.pinv(self.design_)
        return self

    def _check_fitted(self):
        if not hasattr(self, "pinv_"):
            self.fit()

    def transform(self, X) -> np.ndarray:
        """Least-squares coefficients, one row per sampled function."""
        self._check_fitted()
        X = check_samples(X, self.n_samples)
        return X @ self.pinv_.T

    def inverse_transform(self, C) -> np.ndarray:
        self._check_fitted()
        C = check_coeffs(C, self.n_frequencies)
        return C @ self.design_.T

    # pointwise synthesis --------------------------------------------------
    def evaluate(self, coeffs: np.ndarray, x) -> np.ndarray:
        """Sum_k c_k sin(2*pi*k*x) at arbitrary points."""
        coeffs = np.asarray(coeffs, dtype=float)
        x = np.asarray(x, dtype=float)
        k = np.arange(1, self.n_frequencies + 1)
        return np.sin(TWO_PI * np.multiply.outer(x, k)) @ coeffs


def sine_transform(samples: np.ndarray, n_frequencies: int = 20,
                   n_samples: int = 101) -> np.ndarray:
    """Coefficients of one sampled function (vector length L)."""
    basis = SineBasis(n_frequencies, n_samples).fit()
    return basis.transform(np.asarray(samples, dtype=float)[None, :])[0]


def sine_reconstruct(coeffs: np.ndarray, x) -> np.ndarray:
    """Pointwise synthesis Sum_k c_k sin(2*pi*k*x)."""
    coeffs = np.asarray(coeffs, dtype=float)
    basis = SineBasis(n_frequencies=len(coeffs), n_samples=2 * len(coeffs) + 1)
    return basis.evaluate(coeffs, x)
