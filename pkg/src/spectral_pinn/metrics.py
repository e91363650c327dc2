"""Accuracy, error-vs-time, stability and generalization metrics.

The grid evaluator batches aggressively: the transformation runs once per
initial condition, the time stepping once per (IC, time), and the
reconstruction over chunked (IC, time, point) columns; the sphere's
dot-product reconstruction evaluates its location features once per grid
point regardless of batch size.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Jet2, Tape
from .blocks import NaiveModel, SpectralPinnModel
from .oracle import OracleSolution, heat_analytic

__all__ = [
    "evaluate_on_grid",
    "oracle_on_grid",
    "mse_metric",
    "error_vs_time",
    "stability_metric",
    "generalization_eval",
]

_CHUNK = 65536


def _grid_arrays(model, grid_points) -> list:
    if model.point_dim == 1:
        return [np.asarray(grid_points, dtype=float)]
    return [np.asarray(a, dtype=float) for a in grid_points]


def evaluate_on_grid(model, F: np.ndarray, times: np.ndarray, grid_points) -> np.ndarray:
    """Model predictions of shape (n_ic, n_times, n_grid)."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    times = np.asarray(times, dtype=float)
    grids = _grid_arrays(model, grid_points)
    n, T, G = F.shape[0], len(times), len(grids[0])

    if isinstance(model, NaiveModel):
        return _naive_grid_eval(model, F, times, grids, n, T, G)

    # coefficients once per IC, stepping once per (IC, t)
    tape = Tape()
    c, c_nl = model.coeffs_on_tape(tape, F.T)
    cv = c.jet.value
    cnl_v = c_nl.jet.value if c_nl is not None else None
    K = cv.shape[0]
    rep = np.repeat(cv, T, axis=1)                      # (K, n*T), IC-major
    t_tile = np.tile(times, n).reshape(1, -1)
    tape2 = Tape()
    args = dict(coeffs=tape2.input(Jet2(rep)), t=tape2.input(Jet2(t_tile)))
    nl = tape2.input(Jet2(np.repeat(cnl_v, T, axis=1))) if cnl_v is not None else None
    evolved = model.time_stepping.forward(tape2, args["coeffs"], args["t"], nl).jet.value

    recon = model.reconstruction
    if recon.variant == "exact_sine":
        k = np.arange(1, K + 1, dtype=float)
        design = np.sin(2 * np.pi * np.outer(grids[0], k))   # (G, K)
        preds = design @ evolved                             # (G, n*T)
        return preds.T.reshape(n, T, G)
    if recon.variant == "sphere_spectral_activations":
        t3 = Tape()
        rd = recon.r_d.forward(t3, t3.input(Jet2(evolved))).jet.value   # (K, n*T)
        t4 = Tape()
        pts = [t4.input(Jet2(g.reshape(1, -1))) for g in grids]
        pt = t4.concat0(pts)
        loc = None
        for l in range(recon.degree + 1):
            s = recon.loc_sin1[l].forward(t4, recon.loc_sin0[l].forward(t4, pt))
            cc = recon.loc_cos1[l].forward(t4, recon.loc_cos0[l].forward(t4, pt))
            term = t4.record("mul", (s, cc))
            loc = term if loc is None else t4.record("add", (loc, term))
        loc_v = loc.jet.value                                # (K, G)
        return (evolved.T @ loc_v).reshape(n, T, G)

    # generic MLP reconstruction: chunk over (IC, time, point) columns
    out = np.empty(n * T * G)
    cols = n * T
    per_chunk = max(1, _CHUNK // G)
    for start in range(0, cols, per_chunk):
        stop = min(cols, start + per_chunk)
        ev = np.repeat(evolved[:, start:stop], G, axis=1)
        tile = [np.tile(g, stop - start).reshape(1, -1) for g in grids]
        t5 = Tape()
        pvars = [t5.input(Jet2(a)) for a in tile]
        val = recon.forward(t5, t5.input(Jet2(ev)), pvars).jet.value
        out[start * G:stop * G] = val
    return out.reshape(n, T, G)


def _naive_grid_eval(model, F, times, grids, n, T, G) -> np.ndarray:
    out = np.empty(n * T * G)
    L = model.n_samples
    cols = n * T * G
    per_chunk = max(G, (_CHUNK // G) * G)
    # column layout: IC-major, then time, then grid point
    t_rep = np.repeat(np.tile(times, n), G)
    f_idx = np.repeat(np.arange(n), T * G)
    g_tiles = [np.tile(g, n * T) for g in grids]
    for start in range(0, cols, per_chunk):
        stop = min(cols, start + per_chunk)
        value = np.concatenate(
            [F[f_idx[start:stop]].T]
            + [g[start:stop].reshape(1, -1) for g in g_tiles]
            + [t_rep[start:stop].reshape(1, -1)], axis=0)
        tape = Tape()
        x = tape.input(Jet2(value))
        out[start:stop] = tape.sum_axis0(model.net.forward(tape, x)).jet.value
    return out.reshape(n, T, G)


def oracle_on_grid(solutions, basis, times: np.ndarray, coeffs_true=None,
                   grid_points=None, alpha: float = 0.01) -> np.ndarray:
    """Ground-truth values (n_ic, n_times, n_grid).

    interval: analytic heat solution from the true family coefficients;
    sphere/torus: stored IMEX trajectories synthesized on the grid.
    """
    times = np.asarray(times, dtype=float)
    if solutions is None:
        x = np.asarray(grid_points, dtype=float)
        n = coeffs_true.shape[0]
        out = np.empty((n, len(times), len(x)))
        for i in range(n):
            for j, t in enumerate(times):
                out[i, j] = heat_analytic(coeffs_true[i], x, t, alpha)
        return out
    synth = basis.design_ if hasattr(basis, "design_") else basis.basis_.vectors
    n = len(solutions)
    out = np.empty((n, len(times), synth.shape[0]))
    for i, sol in enumerate(solutions):
        for j, t in enumerate(times):
            out[i, j] = synth @ sol.at_time(t)
    return out


def mse_metric(pred: np.ndarray, truth: np.ndarray) -> float:
    """Mean squared error over all (IC, time, point) tuples."""
    return float(np.mean((pred - truth) ** 2))


def error_vs_time(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Per-time-step error: sum over ICs of (1/G) sqrt(sum over grid |diff|^2)."""
    G = pred.shape[2]
    per_ic = np.sqrt(np.sum((pred - truth) ** 2, axis=2)) / G
    return per_ic.sum(axis=0)


def stability_metric(model, F: np.ndarray, times, grid_points,
                     noise_variance: float = 0.3, seed: int = 0) -> np.ndarray:
    """||u(f + delta) - u(f)||_2 / ||delta||_2 on the grid, averaged over ICs.

    delta has i.i.d. N(0, variance) entries, drawn once per IC from the seed.
    """
    if noise_variance <= 0:
        raise ValueError("noise variance must be positive")
    F = np.atleast_2d(np.asarray(F, dtype=float))
    rng = np.random.default_rng(seed)
    delta = rng.normal(scale=np.sqrt(noise_variance), size=F.shape)
    times = np.asarray(times, dtype=float)
    base = evaluate_on_grid(model, F, times, grid_points)
    pert = evaluate_on_grid(model, F + delta, times, grid_points)
    num = np.linalg.norm(pert - base, axis=2)            # (n, T)
    den = np.linalg.norm(delta, axis=1)[:, None]
    return (num / den).mean(axis=0)


def generalization_eval(model, pred_args, truth: np.ndarray) -> float:
    """MSE against the oracle on a strictly larger initial-condition family."""
    pred = evaluate_on_grid(model, *pred_args)
    return mse_metric(pred, truth)
