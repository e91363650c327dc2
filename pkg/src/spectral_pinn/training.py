"""Initial-condition families, datasets, PINN losses and the phase schedule.

Losses are recorded on a tape over the whole minibatch, so one backward
pass yields all parameter gradients.  The residual loss runs one extra
forward per seeded coordinate (t; x; or theta and phi) and combines the
selected jet components into the PDE residual on the same tape.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .autodiff import Jet2, Tape, tape_backward
from .blocks import NaiveModel, SpectralPinnModel, _as_batch_samples
from .exceptions import PoleSingularityError
from .nn import AdamState, Diverged, ParamSet, train_loop

__all__ = [
    "FunctionFamilySpec",
    "TripleDataset",
    "Phase",
    "sample_family",
    "make_triples",
    "loss_initial",
    "loss_residual",
    "loss_coeff_consistency",
    "run_schedule",
    "save_dataset",
    "load_dataset",
]

POLE_MARGIN = 0.05


@dataclass(frozen=True)
class FunctionFamilySpec:
    """Initial-condition family: normalized random coefficients in a basis.

    interval: trigonometric polynomials of the given degree; sphere: real
    spherical harmonics up to the degree; torus: products
    sin(k theta) sin(l phi), 1 <= k, l <= degree.
    """

    geometry: str
    degree: int
    horizon: float = 0.5

    @property
    def dim(self) -> int:
        if self.geometry == "interval":
            return self.degree
        if self.geometry == "sphere":
            return (self.degree + 1) ** 2
        return self.degree ** 2


def _interval_synth(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    k = np.arange(1, coeffs.shape[-1] + 1)
    return np.sin(2 * np.pi * np.multiply.outer(x, k)) @ coeffs.T


def _torus_synth(coeffs: np.ndarray, theta, phi) -> np.ndarray:
    """coeffs (n, d^2) row-major in (k, l); theta/phi broadcastable arrays."""
    d = int(round(np.sqrt(coeffs.shape[-1])))
    out = 0.0
    for k in range(1, d + 1):
        for l in range(1, d + 1):
            c = coeffs[..., (k - 1) * d + (l - 1)]
            out = out + np.multiply.outer(np.sin(k * np.asarray(theta))
                                          * np.sin(l * np.asarray(phi)), c)
    return out


def family_value_at(spec: FunctionFamilySpec, coeffs: np.ndarray, point,
                    sphere_basis=None):
    """Exact family function value at a point (per-row coefficients)."""
    if spec.geometry == "interval":
        k = np.arange(1, spec.dim + 1)
        return np.sin(2 * np.pi * np.multiply.outer(np.asarray(point), k)) @ coeffs.T
    if spec.geometry == "sphere":
        theta, phi = point
        from .bases.sphere import real_sph_harm, sphere_index_order
        out = 0.0
        for i, (l, m) in enumerate(sphere_index_order(spec.degree)):
            out = out + coeffs[..., i] * real_sph_harm(l, m, theta, phi)
        return out
    theta, phi = point
    return _torus_synth(coeffs, theta, phi)


def sample_family(spec: FunctionFamilySpec, n: int, seed: int, basis) -> tuple:
    """Draw n normalized coefficient vectors and their sample grids.

    Coefficients are isotropic Gaussian draws scaled to unit Euclidean
    norm (uniform on the sphere of the coefficient space); samples are
    taken on the geometry's fixed grid via the supplied basis object.
    """
    rng = np.random.default_rng(seed)
    C = rng.normal(size=(n, spec.dim))
    C /= np.linalg.norm(C, axis=1, keepdims=True)
    if spec.geometry == "interval":
        F = _interval_synth(C, basis.grid_).T
    elif spec.geometry == "sphere":
        from .bases.sphere import SphereBasis
        synth = basis if basis.degree == spec.degree else SphereBasis(
            spec.degree, basis.n_theta, basis.n_phi).fit()
        F = synth.inverse_transform(C)
    else:
        mesh = basis.mesh_
        tt, pp = np.meshgrid(mesh.theta, mesh.phi, indexing="ij")
        F = np.stack([_torus_synth(C[i], tt.ravel(), pp.ravel()) for i in range(n)])
    return C, F


@dataclass
class TripleDataset:
    """Random (samples, point, t) triples plus exact pointwise targets."""

    spec: FunctionFamilySpec
    samples: np.ndarray      # (n, L)
    coeffs: np.ndarray       # (n, dim) family coefficients
    points: np.ndarray       # (n, point_dim)
    t: np.ndarray            # (n,)
    u0_at_point: np.ndarray  # (n,) initial condition value at the point

    def __len__(self) -> int:
        return self.samples.shape[0]


def make_triples(spec: FunctionFamilySpec, n: int, seed: int, basis) -> TripleDataset:
    rng = np.random.default_rng(seed)
    C, F = sample_family(spec, n, seed + 1, basis)
    t = rng.uniform(0.0, spec.horizon, size=n)
    if spec.geometry == "interval":
        pts = rng.uniform(0.0, 1.0, size=(n, 1))
        u0 = np.array([family_value_at(spec, C[i], pts[i, 0]) for i in range(n)])
    elif spec.geometry == "sphere":
        theta = rng.uniform(POLE_MARGIN, np.pi - POLE_MARGIN, size=n)
        phi = rng.uniform(0.0, 2 * np.pi, size=n)
        pts = np.stack([theta, phi], axis=1)
        u0 = np.array([family_value_at(spec, C[i], (theta[i], phi[i])) for i in range(n)])
    else:
        pts = rng.uniform(0.0, 2 * np.pi, size=(n, 2))
        u0 = np.array([family_value_at(spec, C[i], (pts[i, 0], pts[i, 1])) for i in range(n)])
    return TripleDataset(spec, F, C, pts, t, u0)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def _spectral_grid_predictions(tape: Tape, model: SpectralPinnModel,
                               samples: np.ndarray, grid_points) -> "Var":
    """Model values at t=0 on the full grid for every IC in the batch.

    Transformation and time stepping run once per IC; the evolved
    representation is repeated across the grid for the reconstruction.
    """
    n = samples.shape[0]
    c, c_nl = model.coeffs_on_tape(tape, samples.T)
    t0 = tape.input(Jet2(np.zeros((1, n)), 0.0, 0.0))
    evolved = model.time_stepping.forward(tape, c, t0, c_nl)
    if model.point_dim == 1:
        grid = np.asarray(grid_points, dtype=float)
        g = len(grid)
        pts = [tape.input(Jet2(np.tile(grid, n).reshape(1, -1), 0.0, 0.0))]
    else:
        gt, gp = grid_points
        g = len(gt)
        pts = [tape.input(Jet2(np.tile(np.asarray(a, dtype=float), n).reshape(1, -1), 0.0, 0.0))
               for a in (gt, gp)]
    rep = tape.repeat_batch(evolved, g)
    return model.reconstruction.forward(tape, rep, pts)


def _naive_grid_predictions(tape: Tape, model: NaiveModel,
                            samples: np.ndarray, grid_points) -> "Var":
    n = samples.shape[0]
    if model.point_dim == 1:
        grid = np.asarray(grid_points, dtype=float)
        g = len(grid)
        coords = [np.tile(grid, n)]
    else:
        gt, gp = grid_points
        g = len(gt)
        coords = [np.tile(np.asarray(a, dtype=float), n) for a in (gt, gp)]
    f_rep = np.repeat(samples.T, g, axis=1)
    value = np.concatenate([f_rep] + [c.reshape(1, -1) for c in coords]
                           + [np.zeros((1, n * g))], axis=0)
    x = tape.input(Jet2(value, 0.0, 0.0))
    return tape.sum_axis0(model.net.forward(tape, x))


def initial_loss_tape(model, samples: np.ndarray, grid_points) -> tuple:
    """Tape computing the t=0 grid MSE for a batch of sampled ICs."""
    tape = Tape()
    if isinstance(model, NaiveModel):
        preds = _naive_grid_predictions(tape, model, samples, grid_points)
    else:
        preds = _spectral_grid_predictions(tape, model, samples, grid_points)
    g = preds.jet.value.size // samples.shape[0]
    targets = tape.constant(Jet2(samples.reshape(-1)))  # IC-major flattening
    diff = tape.record("sub", (preds, targets))
    loss = tape.mean_all(tape.record("mul", (diff, diff)))
    return tape, loss


def loss_initial(model, samples: np.ndarray, grid_points) -> float:
    """Mean squared mismatch of the model at t=0 against the IC samples.

    Normalization matches the (1/(G N0)) double sum over ICs and grid.
    """
    _, loss = initial_loss_tape(model, samples, grid_points)
    return float(loss.jet.value)


def residual_loss_tape(model, samples: np.ndarray, points: np.ndarray,
                       t: np.ndarray, pde_kind: str = None) -> tuple:
    """Tape computing the mean squared PDE residual over a triple batch."""
    tape = Tape()
    sample_cols = samples.T
    geometry = model.geometry
    if geometry != "interval":
        st = np.sin(points[:, 0])
        if np.any(np.abs(st) < 1e-6) and geometry == "sphere":
            raise PoleSingularityError("collocation batch touches a pole")

    def forward(seed):
        if geometry == "interval":
            pj = [Jet2(points[:, 0].reshape(1, -1), 1.0 if seed == "x" else 0.0, 0.0)]
        else:
            pj = [Jet2(points[:, 0].reshape(1, -1), 1.0 if seed == "theta" else 0.0, 0.0),
                  Jet2(points[:, 1].reshape(1, -1), 1.0 if seed == "phi" else 0.0, 0.0)]
        tj = Jet2(t.reshape(1, -1), 1.0 if seed == "t" else 0.0, 0.0)
        return model.forward_on_tape(tape, sample_cols, pj, tj)

    out_t = forward("t")
    u_t = tape.select(out_t, "d1")
    kind = pde_kind or ("heat" if geometry == "interval" else "allen_cahn")

    if geometry == "interval":
        out_x = forward("x")
        u_xx = tape.select(out_x, "d2")
        alpha = tape.constant(Jet2(model.alpha))
        residual = tape.record("sub", (u_t, tape.record("mul", (alpha, u_xx))))
    else:
        out_th = forward("theta")
        out_ph = forward("phi")
        theta = points[:, 0]
        if geometry == "sphere":
            c1 = np.cos(theta) / np.sin(theta)
            c2 = 1.0 / np.sin(theta) ** 2
            c0 = np.ones_like(theta)
        else:
            R, r = model.torus_R, model.torus_r
            w = R + r * np.cos(theta)
            c0 = np.full_like(theta, 1.0 / r**2)
            c1 = -np.sin(theta) / (r * w)
            c2 = 1.0 / w**2
        lap = tape.record("add", (
            tape.record("add", (
                tape.record("mul", (tape.constant(Jet2(c0)), tape.select(out_th, "d2"))),
                tape.record("mul", (tape.constant(Jet2(c1)), tape.select(out_th, "d1"))))),
            tape.record("mul", (tape.constant(Jet2(c2)), tape.select(out_ph, "d2"))),
        ))
        if kind == "heat":
            eps = tape.constant(Jet2(model.epsilon))
            residual = tape.record("sub", (u_t, tape.record("mul", (eps, lap))))
        else:
            u = tape.select(out_t, "value")
            u3 = tape.record("mul", (tape.record("mul", (u, u)), u))
            eps = tape.constant(Jet2(model.epsilon))
            rhs = tape.record("sub", (
                tape.record("add", (tape.record("mul", (eps, lap)), u)), u3))
            residual = tape.record("sub", (u_t, rhs))
    loss = tape.mean_all(tape.record("mul", (residual, residual)))
    return tape, loss


def loss_residual(model, samples: np.ndarray, points: np.ndarray,
                  t: np.ndarray, pde_kind: str = None) -> float:
    """Mean squared residual of the governing equation at the collocation batch."""
    _, loss = residual_loss_tape(model, samples, points, t, pde_kind)
    return float(loss.jet.value)


def coeff_consistency_tape(model: SpectralPinnModel, samples: np.ndarray) -> tuple:
    """Tape for ||D(C(F), 0) - C(F)||^2 / (K N): identity at time zero."""
    tape = Tape()
    c, c_nl = model.coeffs_on_tape(tape, samples.T)
    t0 = tape.input(Jet2(np.zeros((1, samples.shape[0])), 0.0, 0.0))
    evolved = model.time_stepping.forward(tape, c, t0, c_nl)
    diff = tape.record("sub", (evolved, c))
    loss = tape.mean_all(tape.record("mul", (diff, diff)))
    return tape, loss


def loss_coeff_consistency(model: SpectralPinnModel, samples: np.ndarray) -> float:
    _, loss = coeff_consistency_tape(model, samples)
    return float(loss.jet.value)


def autoencode_loss_tape(model: SpectralPinnModel, samples: np.ndarray,
                         points: np.ndarray, targets: np.ndarray) -> tuple:
    """Tape for |f_i(x_i) - R(C(F_i), x_i)|^2: transformation+reconstruction only."""
    tape = Tape()
    fv = tape.input(Jet2(samples.T, 0.0, 0.0))
    c = model.transformation.forward(tape, fv)
    pts = [tape.input(Jet2(points[:, d].reshape(1, -1), 0.0, 0.0))
           for d in range(points.shape[1])]
    preds = model.reconstruction.forward(tape, c, pts)
    diff = tape.record("sub", (preds, tape.constant(Jet2(targets))))
    loss = tape.mean_all(tape.record("mul", (diff, diff)))
    return tape, loss


def supervised_transform_tape(model: SpectralPinnModel, samples: np.ndarray,
                              coeff_targets: np.ndarray) -> tuple:
    """Tape for ||C(F) - c_true||^2 (interval/torus transformation pretraining)."""
    tape = Tape()
    fv = tape.input(Jet2(samples.T, 0.0, 0.0))
    c = model.transformation.forward(tape, fv)
    diff = tape.record("sub", (c, tape.constant(Jet2(coeff_targets.T))))
    loss = tape.mean_all(tape.record("mul", (diff, diff)))
    return tape, loss


def supervised_reconstruction_tape(model: SpectralPinnModel, coeffs: np.ndarray,
                                   points: np.ndarray, targets: np.ndarray) -> tuple:
    """Tape for |R(c_true, x_i) - f_i(x_i)|^2 (torus reconstruction pretraining)."""
    tape = Tape()
    c = tape.input(Jet2(coeffs.T, 0.0, 0.0))
    pts = [tape.input(Jet2(points[:, d].reshape(1, -1), 0.0, 0.0))
           for d in range(points.shape[1])]
    preds = model.reconstruction.forward(tape, c, pts)
    diff = tape.record("sub", (preds, tape.constant(Jet2(targets))))
    loss = tape.mean_all(tape.record("mul", (diff, diff)))
    return tape, loss


# ---------------------------------------------------------------------------
# Schedule
# ---------------------------------------------------------------------------


@dataclass
class Phase:
    """One stage of the schedule: which losses, which blocks, how long."""

    name: str
    epochs: int
    losses: tuple              # subset of l0 | ld | lcoef | autoencode |
    #                            transform_supervised | reconstruction_supervised
    train_blocks: tuple = ("all",)
    lr: float = 1e-3
    batch_size: int = 256


@dataclass
class ScheduleData:
    """Everything the phases may reference."""

    triples: Optional[TripleDataset] = None
    l0_samples: Optional[np.ndarray] = None        # (n0, L)
    grid_points: object = None                     # grid for the L0 loss
    pretrain: Optional[TripleDataset] = None       # pairs for pre-training
    pretrain_coeff_targets: Optional[np.ndarray] = None  # exact transform targets


def _frozen_names(model, params: ParamSet, train_blocks: tuple) -> list:
    if "all" in train_blocks or isinstance(model, NaiveModel):
        return []
    keep = []
    for blk in ("transformation", "time_stepping", "reconstruction"):
        if blk not in train_blocks:
            keep.extend(model.block_param_names(params, blk))
    return keep


def run_schedule(model, data: ScheduleData, phases: Sequence[Phase],
                 seed: int = 0) -> dict:
    """Execute the phases in order; returns {phase name: loss trace}.

    The canonical three-phase schedule pre-trains transformation and
    reconstruction, then trains the time-stepping block for 20 epochs with
    the others frozen, then everything jointly for 25 more.
    """
    params = model.params()
    traces = {}
    for p_i, phase in enumerate(phases):
        frozen = _frozen_names(model, params, phase.train_blocks)

        if "ld" in phase.losses or "l0" in phase.losses or "lcoef" in phase.losses:
            n_items = len(data.triples) if data.triples is not None else \
                data.l0_samples.shape[0]
        else:
            n_items = len(data.pretrain)

        def loss_and_grads(idx, phase=phase):
            total = 0.0
            grads = {}
            for term in phase.losses:
                tape, loss = _build_term(model, data, term, idx)
                total += float(loss.jet.value)
                rep = tape_backward(tape, loss)
                for k, g in rep.grads.items():
                    grads[k] = grads.get(k, 0.0) + g
            return total, grads

        traces[phase.name] = train_loop(
            params, loss_and_grads, n_items, epochs=phase.epochs,
            batch_size=phase.batch_size, lr=phase.lr,
            seed=seed + 1000 * p_i, frozen=frozen)
    return traces


def _build_term(model, data: ScheduleData, term: str, idx: np.ndarray) -> tuple:
    if term == "l0":
        n0 = data.l0_samples.shape[0]
        sub = data.l0_samples[idx % n0] if len(idx) < n0 else data.l0_samples
        return initial_loss_tape(model, sub, data.grid_points)
    if term == "ld":
        d = data.triples
        return residual_loss_tape(model, d.samples[idx], d.points[idx], d.t[idx])
    if term == "lcoef":
        return coeff_consistency_tape(model, data.triples.samples[idx])
    if term == "autoencode":
        d = data.pretrain
        return autoencode_loss_tape(model, d.samples[idx], d.points[idx],
                                    d.u0_at_point[idx])
    if term == "transform_supervised":
        d = data.pretrain
        targets = data.pretrain_coeff_targets
        return supervised_transform_tape(model, d.samples[idx], targets[idx])
    if term == "reconstruction_supervised":
        d = data.pretrain
        targets = data.pretrain_coeff_targets
        return supervised_reconstruction_tape(model, targets[idx], d.points[idx],
                                              d.u0_at_point[idx])
    raise ValueError(f"unknown loss term {term!r}")


# ---------------------------------------------------------------------------
# Dataset cache: family hash + seed + tensors
# ---------------------------------------------------------------------------

_MAGIC = b"SPNNDAT1"


def dataset_key(spec: FunctionFamilySpec, n: int, seed: int) -> str:
    h = hashlib.sha256(f"{spec.geometry}|{spec.degree}|{spec.horizon}|{n}|{seed}".encode())
    return h.hexdigest()[:24]


def save_dataset(path, ds: TripleDataset) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        head = f"{ds.spec.geometry}|{ds.spec.degree}|{ds.spec.horizon}".encode()
        fh.write(struct.pack("<H", len(head)))
        fh.write(head)
        for arr in (ds.samples, ds.coeffs, ds.points, ds.t, ds.u0_at_point):
            a = np.ascontiguousarray(arr, dtype="<f8")
            fh.write(struct.pack("<B", a.ndim))
            for d in a.shape:
                fh.write(struct.pack("<I", d))
            fh.write(a.tobytes())


def load_dataset(path) -> TripleDataset:
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError(f"{path} is not a dataset file")
        (hlen,) = struct.unpack("<H", fh.read(2))
        geo, degree, horizon = fh.read(hlen).decode().split("|")
        arrays = []
        for _ in range(5):
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
            n = int(np.prod(shape))
            arrays.append(np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(shape).astype(float))
    spec = FunctionFamilySpec(geo, int(degree), float(horizon))
    return TripleDataset(spec, *arrays)
