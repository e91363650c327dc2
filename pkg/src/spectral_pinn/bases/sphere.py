"""Real spherical harmonics of bounded degree on the 20x20 parametric grid.

The associated Legendre recurrence is written with plain arithmetic so it
accepts floats, numpy arrays, or :class:`Jet2` values; the latter is what
lets the Laplace-Beltrami check differentiate Y_lm exactly through the
same code path the models use.
"""

from __future__ import annotations

import math
from typing import Union

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ..autodiff import Jet2, jet_cos, jet_seed, jet_sin
from ..exceptions import PoleSingularityError, RankDeficientError
from ..validation import check_coeffs, check_samples

__all__ = ["SphereBasis", "assoc_legendre", "real_sph_harm", "sphere_laplacian_check"]

POLE_TOL = 1e-6


def _sin(x):
    return jet_sin(x) if isinstance(x, Jet2) else np.sin(x)


def _cos(x):
    return jet_cos(x) if isinstance(x, Jet2) else np.cos(x)


def _legendre_no_cs(l: int, m: int, ct, st):
    """P_l^m(cos t) without Condon-Shortley, given cos t and sin t.

    Diagonal seed P_m^m = (2m-1)!! sin^m, then upward recurrence in l;
    works for jets because only +,-,*,/ and integer scaling appear.
    """
    # P_m^m
    pmm = 1.0
    for k in range(1, m + 1):
        pmm = pmm * (2 * k - 1)
    p_mm = pmm * st ** m if m > 0 else (ct * 0.0 + 1.0 if isinstance(ct, Jet2) else np.ones_like(np.asarray(ct, dtype=float)))
    if l == m:
        return p_mm
    p_m1m = (2 * m + 1) * (ct * p_mm)
    if l == m + 1:
        return p_m1m
    p_prev, p_cur = p_mm, p_m1m
    for ll in range(m + 2, l + 1):
        p_next = ((2 * ll - 1) * (ct * p_cur) - (ll + m - 1) * p_prev) * (1.0 / (ll - m))
        p_prev, p_cur = p_cur, p_next
    return p_cur


def assoc_legendre(l: int, m: int, x) -> np.ndarray:
    """Associated Legendre P_l^m(x), Condon-Shortley phase included.

    Matches the Rodrigues-formula convention
    P_l^m = (-1)^m (1-x^2)^(m/2) d^m/dx^m P_l(x).
    """
    if not (0 <= m <= l):
        raise ValueError(f"order must satisfy 0 <= m <= l, got l={l}, m={m}")
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0):
        raise ValueError("argument must lie in [-1, 1]")
    st = np.sqrt(np.maximum(0.0, 1.0 - x * x))
    return (-1.0) ** m * _legendre_no_cs(l, m, x, st)


def _norm_lm(l: int, m: int) -> float:
    return math.sqrt((2 * l + 1) / (4.0 * math.pi)
                     * math.factorial(l - m) / math.factorial(l + m))


SQRT2 = math.sqrt(2.0)


def real_sph_harm(l: int, m: int, theta, phi):
    """Real spherical harmonic Y_lm at polar angle theta, azimuth phi.

    Built from the complex harmonics via the usual three cases
    (sin(|m| phi) for m < 0, the zonal harmonic for m = 0, cos(m phi)
    for m > 0); the Condon-Shortley phase enters exactly once overall.
    Accepts jets in theta/phi for exact differentiation.
    """
    if abs(m) > l:
        raise ValueError(f"order must satisfy |m| <= l, got l={l}, m={m}")
    ct, st = _cos(theta), _sin(theta)
    am = abs(m)
    # the explicit (-1)^m prefactor cancels the Condon-Shortley sign kept
    # in assoc_legendre, leaving the CS-free polynomial
    p = _legendre_no_cs(l, am, ct, st)
    n = _norm_lm(l, am)
    if m == 0:
        return n * p
    if m > 0:
        return SQRT2 * n * (p * _cos(float(m) * phi))
    return SQRT2 * n * (p * _sin(float(am) * phi))


def sphere_laplacian_check(l: int, m: int, theta: float, phi: float) -> float:
    """Laplace-Beltrami of Y_lm from two jet passes (theta, then phi).

    Assembles u_tt + (cos t/sin t) u_t + u_pp / sin^2 t; raises near the
    poles where the 1/sin factors blow up.
    """
    st = math.sin(theta)
    if abs(st) < POLE_TOL:
        raise PoleSingularityError(f"theta={theta} too close to a pole")
    jt = real_sph_harm(l, m, jet_seed(theta), Jet2(phi))
    jp = real_sph_harm(l, m, Jet2(theta), jet_seed(phi))
    u_t, u_tt = jt.d1, jt.d2
    u_pp = jp.d2
    return float(u_tt + (math.cos(theta) / st) * u_t + u_pp / (st * st))


def sphere_index_order(degree: int) -> list:
    """(l, m) pairs in lexicographic order, m from -l to l."""
    return [(l, m) for l in range(degree + 1) for m in range(-l, l + 1)]


class SphereBasis(BaseEstimator, TransformerMixin):
    """Real spherical-harmonic transform on the uniform parametric grid.

    Parameters
    ----------
    degree : int, default=9
        Maximum degree l; the basis has (degree+1)^2 functions ordered
        (l, m) lexicographically with m = -l..l.
    n_theta, n_phi : int, default=20
        Grid sizes; theta_j = pi j/(n_theta-1) includes both poles,
        phi_k = 2 pi k/n_phi.
    """

    def __init__(self, degree: int = 9, n_theta: int = 20, n_phi: int = 20):
        self.degree = degree
        self.n_theta = n_theta
        self.n_phi = n_phi

    @property
    def n_coeffs(self) -> int:
        return (self.degree + 1) ** 2

    @property
    def n_grid(self) -> int:
        return self.n_theta * self.n_phi

    def fit(self, X=None, y=None):
        self.theta_ = np.pi * np.arange(self.n_theta) / (self.n_theta - 1)
        self.phi_ = 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi
        tt, pp = np.meshgrid(self.theta_, self.phi_, indexing="ij")
        self.grid_theta_ = tt.ravel()
        self.grid_phi_ = pp.ravel()
        self.index_ = sphere_index_order(self.degree)
        cols = [real_sph_harm(l, m, self.grid_theta_, self.grid_phi_)
                for (l, m) in self.index_]
        self.design_ = np.stack(cols, axis=1)
        if np.linalg.matrix_rank(self.design_) < self.n_coeffs:
            raise RankDeficientError(
                f"spherical design matrix rank < {self.n_coeffs}; "
                f"grid {self.n_theta}x{self.n_phi} cannot resolve degree {self.degree}"
            )
        self.pinv_ = np.linalg.pinv(self.design_)
        return self

    def _check_fitted(self):
        if not hasattr(self, "pinv_"):
            self.fit()

    def transform(self, X) -> np.ndarray:
        """Coefficients from flattened grid samples, one row per function."""
        self._check_fitted()
        X = check_samples(X, self.n_grid)
        return X @ self.pinv_.T

    def inverse_transform(self, C) -> np.ndarray:
        self._check_fitted()
        C = check_coeffs(C, self.n_coeffs)
        return C @ self.design_.T

    def evaluate(self, coeffs: np.ndarray, theta, phi):
        """Sum_lm c_lm Y_lm at arbitrary points."""
        self._check_fitted()
        coeffs = np.asarray(coeffs, dtype=float)
        out = 0.0
        for c, (l, m) in zip(coeffs, self.index_):
            out = out + c * real_sph_harm(l, m, theta, phi)
        return out

    def eigenvalues(self) -> np.ndarray:
        """-Laplace-Beltrami eigenvalue l(l+1) per basis function."""
        self._check_fitted()
        return np.array([l * (l + 1) for (l, m) in self.index_], dtype=float)
