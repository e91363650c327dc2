"""Estimator-style wrappers: fit on a family of initial conditions, then
predict solution values at arbitrary (samples, point, time) queries.

These follow the scikit-learn conventions (hyperparameters stored verbatim
in __init__, fitted state in trailing-underscore attributes, get_params /
set_params inherited) so the models drop into existing tooling; the heavy
lifting lives in the blocks/training modules.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from .bases import SineBasis, SphereBasis, TorusBasis
from .blocks import build_model, build_naive_model, model_forward
from .metrics import evaluate_on_grid
from .training import (
    FunctionFamilySpec,
    Phase,
    ScheduleData,
    make_triples,
    run_schedule,
    sample_family,
)
from .validation import check_samples, check_time

__all__ = ["SpectralPinnRegressor", "NaivePinnRegressor"]

_GEOMETRY_VARIANTS = {
    "interval": ("linear_trained", "realization_heat", "exact_sine"),
    "sphere": ("linear_trained", "exp_nonlinear_a", "sphere_spectral_activations"),
    "torus": ("grid_conv_trained", "torus_a", "torus_mlp"),
}


class _PinnBase(BaseEstimator):
    def _basis(self):
        if self.geometry == "interval":
            return SineBasis(20, 101).fit()
        if self.geometry == "sphere":
            return SphereBasis(self.degree).fit()
        if self.geometry == "torus":
            return TorusBasis(n_theta=self.mesh_size, n_phi=self.mesh_size).fit()
        raise ValueError(f"unknown geometry {self.geometry!r}")

    def _family(self):
        return FunctionFamilySpec(self.geometry, self.degree, horizon=self.horizon)

    def _data(self, basis):
        spec = self._family()
        triples = make_triples(spec, self.n_triples, self.random_state, basis)
        pre = make_triples(spec, max(self.n_triples // 5, 200),
                           self.random_state + 1, basis)
        _, F0 = sample_family(spec, max(self.n_triples // 20, 64),
                              self.random_state + 2, basis)
        if self.geometry == "interval":
            grid = basis.grid_
            targets = pre.coeffs
        elif self.geometry == "sphere":
            grid = (basis.grid_theta_, basis.grid_phi_)
            targets = pre.coeffs if basis.degree == spec.degree \
                else basis.transform(pre.samples)
        else:
            mesh = basis.mesh_
            tt, pp = np.meshgrid(mesh.theta, mesh.phi, indexing="ij")
            grid = (tt.ravel(), pp.ravel())
            targets = basis.transform(pre.samples)
        return ScheduleData(triples=triples, l0_samples=F0, grid_points=grid,
                            pretrain=pre, pretrain_coeff_targets=targets)

    def predict(self, X, points, t) -> np.ndarray:
        """Solution estimates for each sampled IC at (points, t).

        X is (n_ic, n_samples); points is an array of x values (interval)
        or a pair of coordinate arrays; t is a scalar or per-point array.
        """
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted; call fit first")
        X = check_samples(X, self.model_.n_samples
                          if hasattr(self.model_, "n_samples")
                          else self.model_.transformation.in_dim)
        t = check_time(t, self.horizon)
        out = []
        for row in X:
            jet = model_forward(self.model_, row, points, t)
            out.append(np.asarray(jet.value))
        return np.stack(out)

    def evaluate_grid(self, X, times, grid_points) -> np.ndarray:
        """Batched predictions of shape (n_ic, n_times, n_grid)."""
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted; call fit first")
        return evaluate_on_grid(self.model_, X, np.asarray(times, float), grid_points)


class SpectralPinnRegressor(_PinnBase):
    """Three-block spectral PINN trained physics-informed on a family.

    Parameters
    ----------
    geometry : str, default="interval"
        One of interval / sphere / torus; picks the PDE (heat on the
        interval, Allen-Cahn otherwise) and the default block variants.
    degree : int, default=20
        Family degree bound (frequencies / spherical degree / product degree).
    alpha, epsilon : float
        Diffusion coefficients for the heat and Allen-Cahn equations.
    n_triples : int, default=2000
        Collocation triples for the residual loss.
    epochs : int, default=40
        Epochs of the main (or joint) phase; pretraining scales with it.
    horizon : float
        Training/prediction time interval [0, horizon].
    mesh_size : int, default=9
        Torus parametric mesh resolution per direction.
    random_state : int, default=0
    """

    def __init__(self, geometry: str = "interval", degree: int = 20,
                 alpha: float = 0.01, epsilon: float = 0.1,
                 n_triples: int = 2000, epochs: int = 40, lr: float = 1e-3,
                 batch_size: int = 256, horizon: float = 0.5,
                 mesh_size: int = 9, random_state: int = 0):
        self.geometry = geometry
        self.degree = degree
        self.alpha = alpha
        self.epsilon = epsilon
        self.n_triples = n_triples
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.horizon = horizon
        self.mesh_size = mesh_size
        self.random_state = random_state

    def fit(self, X=None, y=None):
        """Train on a sampled family; X/y are ignored (physics-informed)."""
        basis = self._basis()
        self.basis_ = basis
        cfg = {"alpha": self.alpha, "epsilon": self.epsilon}
        if self.geometry == "interval":
            cfg.update(n_samples=101, n_coeffs=20)
        elif self.geometry == "sphere":
            cfg.update(n_samples=basis.n_grid, n_coeffs=basis.n_coeffs,
                       degree=basis.degree)
        else:
            cfg.update(n_samples=basis.n_grid, n_coeffs=basis.n_coeffs,
                       grid_shape=(basis.n_theta, basis.n_phi))
        self.model_ = build_model(self.geometry, _GEOMETRY_VARIANTS[self.geometry],
                                  cfg, self.random_state)
        data = self._data(basis)
        if self.geometry == "interval":
            phases = [
                Phase("pretrain", self.epochs, ("transform_supervised",),
                      ("transformation",), lr=2e-3, batch_size=self.batch_size),
                Phase("main", self.epochs, ("l0", "ld"), lr=self.lr,
                      batch_size=self.batch_size),
            ]
        else:
            pre = ("transform_supervised", "reconstruction_supervised") \
                if self.geometry == "torus" else ("autoencode",)
            phases = [
                Phase("pretrain", 2 * self.epochs, pre,
                      ("transformation", "reconstruction"), lr=2e-3,
                      batch_size=self.batch_size),
                Phase("stepping", max(self.epochs // 2, 1), ("l0", "ld", "lcoef"),
                      ("time_stepping",), lr=self.lr, batch_size=self.batch_size),
                Phase("joint", self.epochs, ("l0", "ld", "lcoef"),
                      lr=self.lr, batch_size=self.batch_size),
            ]
        self.traces_ = run_schedule(self.model_, data, phases,
                                    seed=self.random_state + 7)
        self.param_count_ = self.model_.param_count
        return self


class NaivePinnRegressor(_PinnBase):
    """Monolithic MLP baseline on the concatenated (samples, point, t) input."""

    def __init__(self, geometry: str = "interval", degree: int = 20,
                 alpha: float = 0.01, epsilon: float = 0.1,
                 n_triples: int = 2000, epochs: int = 40, lr: float = 1e-3,
                 batch_size: int = 256, horizon: float = 0.5,
                 mesh_size: int = 9, width: Optional[int] = None,
                 n_layers: Optional[int] = None, random_state: int = 0):
        self.geometry = geometry
        self.degree = degree
        self.alpha = alpha
        self.epsilon = epsilon
        self.n_triples = n_triples
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.horizon = horizon
        self.mesh_size = mesh_size
        self.width = width
        self.n_layers = n_layers
        self.random_state = random_state

    def fit(self, X=None, y=None):
        basis = self._basis()
        self.basis_ = basis
        n_samples = 101 if self.geometry == "interval" else basis.n_grid
        cfg = {"n_samples": n_samples, "alpha": self.alpha, "epsilon": self.epsilon}
        if self.width:
            cfg["naive_width"] = self.width
        if self.n_layers:
            cfg["naive_layers"] = self.n_layers
        self.model_ = build_naive_model(self.geometry, cfg, self.random_state)
        data = self._data(basis)
        phases = [Phase("main", self.epochs, ("l0", "ld"), lr=self.lr,
                        batch_size=self.batch_size)]
        self.traces_ = run_schedule(self.model_, data, phases,
                                    seed=self.random_state + 7)
        self.param_count_ = self.model_.param_count
        return self
