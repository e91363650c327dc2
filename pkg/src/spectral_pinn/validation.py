"""Light input-validation helpers shared by the estimator-facing API."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

__all__ = ["check_samples", "check_coeffs", "check_time"]


def check_samples(X, n_features: int, name: str = "X") -> np.ndarray:
    """Validate a 2-D float batch of sampled functions with fixed width."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != n_features:
        raise ValueError(
            f"{name} has {X.shape[1]} columns, expected {n_features}"
        )
    return X


def check_coeffs(C, n_coeffs: int, name: str = "coefficients") -> np.ndarray:
    C = check_array(C, dtype=np.float64, ensure_2d=True)
    if C.shape[1] != n_coeffs:
        raise ValueError(
            f"{name} has length {C.shape[1]}, expected {n_coeffs}"
        )
    return C


def check_time(t, horizon: float) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > horizon + 1e-12):
        raise ValueError(f"time stamps must lie in [0, {horizon}]")
    return t
