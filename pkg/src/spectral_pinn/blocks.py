"""The three-block spectral PINN in every evaluated variant, plus the
naive monolithic baseline.

A model is transformation -> time stepping -> reconstruction:
samples of the initial condition become (approximate) spectral
coefficients, the coefficients are evolved to time t, and the evolved
representation is evaluated at a point.  Exact "realization" blocks
implement the closed-form spectral solution of the heat equation and are
parameter-free; trained blocks are MLPs/convnets on the same interfaces.

Batch convention: all block inputs/outputs are 2-D jets (dim, batch);
points and time stamps are (1, batch).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .autodiff import Jet2, Tape, Var, jet_seed
from .exceptions import PoleSingularityError
from .nn import ConvNet, DenseLayer, Mlp, ParamSet, init_conv, init_params

__all__ = [
    "TransformationBlock",
    "TimeSteppingBlock",
    "ReconstructionBlock",
    "SpectralPinnModel",
    "NaiveModel",
    "build_block",
    "build_model",
    "build_naive_model",
    "model_forward",
    "model_derivatives",
    "reassemble_multi_eval",
]

TWO_PI = 2.0 * np.pi


def _as_batch(x) -> np.ndarray:
    """Lift scalars/vectors to the (dim, batch) layout."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        return a.reshape(1, 1)
    if a.ndim == 1:
        return a.reshape(1, -1)
    return a


# ---------------------------------------------------------------------------
# Transformation block
# ---------------------------------------------------------------------------


class TransformationBlock:
    """Samples -> coefficient estimate.

    variants: exact_operator (fixed projection matrix), linear_trained
    (one dense layer, the interval/sphere choice), grid_conv_trained
    (3 periodic convs + dense, torus), encoder (5 convs + dense).
    """

    def __init__(self, variant: str, in_dim: int, out_dim: int,
                 matrix: Optional[np.ndarray] = None,
                 net=None, name: str = "transformation"):
        self.variant = variant
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.matrix = matrix
        self.net = net
        self.name = name

    @property
    def param_count(self) -> int:
        return 0 if self.net is None else self.net.param_count

    def register(self, params: ParamSet) -> None:
        if self.net is not None:
            self.net.register(params)

    def forward(self, tape: Tape, samples: Var) -> Var:
        if self.variant == "exact_operator":
            return tape.matmul_const(self.matrix, samples)
        return self.net.forward(tape, samples)


# ---------------------------------------------------------------------------
# Time stepping block
# ---------------------------------------------------------------------------


class TimeSteppingBlock:
    """(coefficients [, nonlinear-part coefficients], t) -> evolved coefficients.

    realization_heat multiplies mode k by exp(-4 pi^2 k^2 alpha t) exactly.
    The exponential variants compute exp(V t) (.) D12(c...) + D2(c..., t);
    plain variants are a single MLP.
    """

    def __init__(self, variant: str, n_coeffs: int,
                 decay_rates: Optional[np.ndarray] = None,
                 d11: Optional[Mlp] = None, d12: Optional[Mlp] = None,
                 d2: Optional[Mlp] = None, net: Optional[Mlp] = None,
                 name: str = "time_stepping"):
        self.variant = variant
        self.n_coeffs = n_coeffs
        self.decay_rates = decay_rates
        self.d11 = d11
        self.d12 = d12
        self.d2 = d2
        self.net = net
        self.name = name

    @property
    def uses_nonlinear_input(self) -> bool:
        return self.variant in ("exp_nonlinear_a", "torus_a")

    @property
    def param_count(self) -> int:
        return sum(n.param_count for n in (self.d11, self.d12, self.d2, self.net) if n)

    def register(self, params: ParamSet) -> None:
        for n in (self.d11, self.d12, self.d2, self.net):
            if n is not None:
                n.register(params)

    def forward(self, tape: Tape, coeffs: Var, t: Var,
                coeffs_nl: Optional[Var] = None) -> Var:
        if self.variant == "realization_heat":
            rates = tape.matmul_const(self.decay_rates.reshape(-1, 1), t)
            return tape.record("mul", (tape.record("exp", (rates,)), coeffs))
        if self.variant in ("mlp_plain", "naive_mlp_c", "torus_b"):
            return self.net.forward(tape, tape.concat0([coeffs, t]))
        if self.variant in ("exp_nonlinear_a", "torus_a"):
            if coeffs_nl is None:
                raise ValueError(f"variant {self.variant} needs the nonlinear-part input")
            pair = tape.concat0([coeffs, coeffs_nl])
            expo = tape.record("exp", (self.d11.forward(tape, t),))
            d1 = tape.record("mul", (expo, self.d12.forward(tape, pair)))
            d2 = self.d2.forward(tape, tape.concat0([coeffs, coeffs_nl, t]))
            return tape.record("add", (d1, d2))
        if self.variant == "exp_standard_b":
            expo = tape.record("exp", (self.d11.forward(tape, t),))
            d1 = tape.record("mul", (expo, self.d12.forward(tape, coeffs)))
            d2 = self.d2.forward(tape, tape.concat0([coeffs, t]))
            return tape.record("add", (d1, d2))
        raise ValueError(f"unknown time stepping variant {self.variant!r}")


# ---------------------------------------------------------------------------
# Reconstruction block
# ---------------------------------------------------------------------------


class ReconstructionBlock:
    """(evolved coefficients, point) -> solution value.

    exact_sine sums a_k sin(2 pi k x); the sphere variant assembles the
    location features from sin^l/cos^l activations and takes a dot
    product with a processed coefficient vector; the MLP variants
    concatenate coefficients with the point coordinates.
    """

    def __init__(self, variant: str, n_coeffs: int, point_dim: int = 1,
                 net: Optional[Mlp] = None, degree: int = 9,
                 loc_sin0=None, loc_sin1=None, loc_cos0=None, loc_cos1=None,
                 r_d: Optional[Mlp] = None, name: str = "reconstruction"):
        self.variant = variant
        self.n_coeffs = n_coeffs
        self.point_dim = point_dim
        self.net = net
        self.degree = degree
        self.loc_sin0 = loc_sin0 or []
        self.loc_sin1 = loc_sin1 or []
        self.loc_cos0 = loc_cos0 or []
        self.loc_cos1 = loc_cos1 or []
        self.r_d = r_d
        self.name = name

    @property
    def param_count(self) -> int:
        nets = [self.net, self.r_d, *self.loc_sin0, *self.loc_sin1,
                *self.loc_cos0, *self.loc_cos1]
        return sum(n.param_count for n in nets if n)

    def register(self, params: ParamSet) -> None:
        for n in (self.net, self.r_d, *self.loc_sin0, *self.loc_sin1,
                  *self.loc_cos0, *self.loc_cos1):
            if n is not None:
                n.register(params)

    def forward(self, tape: Tape, coeffs: Var, point: Sequence[Var]) -> Var:
        if self.variant == "exact_sine":
            k = np.arange(1, self.n_coeffs + 1, dtype=float).reshape(-1, 1)
            phases = tape.matmul_const(TWO_PI * k, point[0])
            terms = tape.record("mul", (coeffs, tape.record("sin", (phases,))))
            return tape.sum_axis0(terms)
        if self.variant in ("mlp_interval", "torus_mlp", "decoder"):
            out = self.net.forward(tape, tape.concat0([coeffs, *point]))
            return tape.sum_axis0(out)  # (1, B) -> (B,)
        if self.variant == "sphere_spectral_activations":
            pt = tape.concat0(list(point))
            loc = None
            for l in range(self.degree + 1):
                s = self.loc_sin1[l].forward(tape, self.loc_sin0[l].forward(tape, pt))
                c = self.loc_cos1[l].forward(tape, self.loc_cos0[l].forward(tape, pt))
                term = tape.record("mul", (s, c))
                loc = term if loc is None else tape.record("add", (loc, term))
            rd = self.r_d.forward(tape, coeffs)
            return tape.sum_axis0(tape.record("mul", (rd, loc)))
        raise ValueError(f"unknown reconstruction variant {self.variant!r}")


# ---------------------------------------------------------------------------
# Composed model and the naive baseline
# ---------------------------------------------------------------------------


@dataclass
class SpectralPinnModel:
    """Composition of the three blocks for one geometry and PDE."""

    transformation: TransformationBlock
    time_stepping: TimeSteppingBlock
    reconstruction: ReconstructionBlock
    geometry: str                     # interval | sphere | torus
    alpha: float = 0.01               # heat diffusivity (interval)
    epsilon: float = 0.1              # Allen-Cahn diffusion (sphere/torus)
    torus_R: float = 2.0
    torus_r: float = 1.0

    def __post_init__(self):
        if self.transformation.out_dim != self.time_stepping.n_coeffs:
            raise ValueError("transformation/time-stepping widths disagree")
        if self.time_stepping.n_coeffs != self.reconstruction.n_coeffs:
            raise ValueError("time-stepping/reconstruction widths disagree")

    @property
    def is_naive(self) -> bool:
        return False

    @property
    def point_dim(self) -> int:
        return 1 if self.geometry == "interval" else 2

    @property
    def param_count(self) -> int:
        return (self.transformation.param_count + self.time_stepping.param_count
                + self.reconstruction.param_count)

    def params(self) -> ParamSet:
        ps = ParamSet()
        self.transformation.register(ps)
        self.time_stepping.register(ps)
        self.reconstruction.register(ps)
        return ps

    def block_param_names(self, params: ParamSet, block: str) -> list:
        prefix = {"transformation": self.transformation.name,
                  "time_stepping": self.time_stepping.name,
                  "reconstruction": self.reconstruction.name}[block]
        return [n for n in params.names() if n.startswith(prefix + ".")]

    # forward pieces --------------------------------------------------------
    def coeffs_on_tape(self, tape: Tape, samples: np.ndarray) -> tuple:
        """Transformation of samples (and of samples - samples^3 if used)."""
        fv = tape.input(Jet2(_as_batch_samples(samples), 0.0, 0.0))
        c = self.transformation.forward(tape, fv)
        c_nl = None
        if self.time_stepping.uses_nonlinear_input:
            f = _as_batch_samples(samples)
            nl = tape.input(Jet2(f - f**3, 0.0, 0.0))
            c_nl = self.transformation.forward(tape, nl)
        return c, c_nl

    def forward_on_tape(self, tape: Tape, samples: np.ndarray,
                        point_jets: Sequence[Jet2], t_jet: Jet2) -> Var:
        c, c_nl = self.coeffs_on_tape(tape, samples)
        t = tape.input(_lift_jet(t_jet))
        evolved = self.time_stepping.forward(tape, c, t, c_nl)
        points = [tape.input(_lift_jet(p)) for p in point_jets]
        return self.reconstruction.forward(tape, evolved, points)


@dataclass
class NaiveModel:
    """Single MLP on the concatenated (samples, point, t) input."""

    net: Mlp
    geometry: str
    n_samples: int
    alpha: float = 0.01
    epsilon: float = 0.1
    torus_R: float = 2.0
    torus_r: float = 1.0

    @property
    def is_naive(self) -> bool:
        return True

    @property
    def point_dim(self) -> int:
        return 1 if self.geometry == "interval" else 2

    @property
    def param_count(self) -> int:
        return self.net.param_count

    def params(self) -> ParamSet:
        ps = ParamSet()
        self.net.register(ps)
        return ps

    def forward_on_tape(self, tape: Tape, samples: np.ndarray,
                        point_jets: Sequence[Jet2], t_jet: Jet2) -> Var:
        f = _as_batch_samples(samples)
        batch = f.shape[1]
        coords = [_lift_jet(p) for p in point_jets] + [_lift_jet(t_jet)]
        value = np.concatenate(
            [np.broadcast_to(f, (self.n_samples, batch))]
            + [np.broadcast_to(np.asarray(c.value, dtype=float).reshape(1, -1),
                               (1, batch)) for c in coords],
            axis=0,
        )
        d = self.n_samples + len(coords)
        d1 = np.zeros((d, 1))
        d2 = np.zeros((d, 1))
        any_seed = False
        for i, c in enumerate(coords):
            if not (isinstance(c.d1, float) and c.d1 == 0.0):
                d1[self.n_samples + i, 0] = float(np.asarray(c.d1).reshape(-1)[0])
                any_seed = True
        x = tape.input(Jet2(value, d1 if any_seed else 0.0, 0.0))
        out = self.net.forward(tape, x)
        return tape.sum_axis0(out)


def _as_batch_samples(samples) -> np.ndarray:
    a = np.asarray(samples, dtype=float)
    if a.ndim == 1:
        return a.reshape(-1, 1)
    return a


def _lift_jet(j: Jet2) -> Jet2:
    """Point/time jets become (1, batch) rows."""
    v = _as_batch(j.value)
    return Jet2(v, j.d1, j.d2)


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def _heat_decay_rates(K: int, alpha: float) -> np.ndarray:
    k = np.arange(1, K + 1, dtype=float)
    return -4.0 * np.pi**2 * k**2 * alpha


def build_block(kind: str, variant: str, config: dict, seed: int):
    """Construct one block; exact parameter counts are a property of the result.

    ``config`` keys (geometry dependent): n_samples, n_coeffs, alpha,
    grid_shape, degree, width overrides per subnet.
    """
    L = config.get("n_samples")
    K = config.get("n_coeffs")
    if kind == "transformation":
        if variant == "exact_operator":
            return TransformationBlock(variant, L, K, matrix=config["matrix"])
        if variant == "linear_trained":
            net = init_params([L, K], seed=seed, final_activation="identity",
                              name="transformation.lin")
            return TransformationBlock(variant, L, K, net=net)
        if variant == "grid_conv_trained":
            net = init_conv(config.get("channels", (8, 16, 32)), 3, K,
                            config["grid_shape"], seed, name="transformation.conv")
            return TransformationBlock(variant, L, K, net=net)
        if variant == "encoder":
            net = init_conv(config.get("channels", (8, 8, 16, 16, 32)), 3, K,
                            config["grid_shape"], seed, name="transformation.enc")
            return TransformationBlock(variant, L, K, net=net)
        raise ValueError(f"unknown transformation variant {variant!r}")

    if kind == "time_stepping":
        if variant == "realization_heat":
            return TimeSteppingBlock(variant, K,
                                     decay_rates=_heat_decay_rates(K, config["alpha"]))
        if variant == "mlp_plain":
            w = config.get("width", 50)
            layers = config.get("layers", 5)
            widths = [K + 1] + [w] * (layers - 1) + [K]
            net = init_params(widths, seed, name="time_stepping.mlp")
            return TimeSteppingBlock(variant, K, net=net)
        if variant in ("exp_nonlinear_a", "torus_a"):
            w12 = config.get("width_d12", 2 * K)
            w2 = config.get("width_d2", 2 * K + 1)
            n12 = config.get("layers_d12", 6 if variant == "exp_nonlinear_a" else 4)
            n2 = config.get("layers_d2", 6 if variant == "exp_nonlinear_a" else 4)
            d11 = Mlp([DenseLayer(np.zeros((K, 1)), None, "identity")],
                      name="time_stepping.d11")
            _glorot_fill(d11, seed + 1)
            d12 = init_params([2 * K] + [w12] * (n12 - 1) + [K], seed + 2,
                              name="time_stepping.d12")
            d2 = init_params([2 * K + 1] + [w2] * (n2 - 1) + [K], seed + 3,
                             name="time_stepping.d2")
            return TimeSteppingBlock(variant, K, d11=d11, d12=d12, d2=d2)
        if variant == "exp_standard_b":
            w12 = config.get("width_d12", K)
            w2 = config.get("width_d2", K + 1)
            n12 = config.get("layers_d12", 11)  # 6 + the 5 extra dense layers
            n2 = config.get("layers_d2", 6)
            d11 = Mlp([DenseLayer(np.zeros((K, 1)), None, "identity")],
                      name="time_stepping.d11")
            _glorot_fill(d11, seed + 1)
            d12 = init_params([K] + [w12] * (n12 - 1) + [K], seed + 2,
                              name="time_stepping.d12")
            d2 = init_params([K + 1] + [w2] * (n2 - 1) + [K], seed + 3,
                             name="time_stepping.d2")
            return TimeSteppingBlock(variant, K, d11=d11, d12=d12, d2=d2)
        if variant in ("naive_mlp_c", "torus_b"):
            w = config.get("width", K + 1)
            layers = config.get("layers", 12 if variant == "naive_mlp_c" else 15)
            net = init_params([K + 1] + [w] * (layers - 1) + [K], seed,
                              name="time_stepping.mlp")
            return TimeSteppingBlock(variant, K, net=net)
        raise ValueError(f"unknown time stepping variant {variant!r}")

    if kind == "reconstruction":
        if variant == "exact_sine":
            return ReconstructionBlock(variant, K)
        if variant == "mlp_interval":
            w = config.get("width", 49)
            layers = config.get("layers", 5)
            net = init_params([K + 1] + [w] * (layers - 1) + [1], seed,
                              name="reconstruction.mlp")
            return ReconstructionBlock(variant, K, net=net)
        if variant in ("torus_mlp", "decoder"):
            w = config.get("width", K + 2)
            layers = config.get("layers", 15 if variant == "torus_mlp" else 17)
            net = init_params([K + 2] + [w] * (layers - 1) + [1], seed,
                              name="reconstruction.mlp")
            return ReconstructionBlock(variant, K, point_dim=2, net=net)
        if variant == "sphere_spectral_activations":
            degree = config["degree"]
            rd_layers = config.get("r_d_layers", 4)
            loc_sin0, loc_sin1, loc_cos0, loc_cos1 = [], [], [], []
            for l in range(degree + 1):
                s0 = init_params([2, 2], seed + 10 * l + 4,
                                 final_activation="identity",
                                 name=f"reconstruction.l{l}.sin0")
                s0.layers[-1].activation = "sin_pow"
                s0.layers[-1].power = l
                s1 = init_params([2, K], seed + 10 * l + 5,
                                 final_activation="identity",
                                 name=f"reconstruction.l{l}.sin1")
                c0 = init_params([2, 2], seed + 10 * l + 6,
                                 final_activation="identity",
                                 name=f"reconstruction.l{l}.cos0")
                c0.layers[-1].activation = "cos_pow"
                c0.layers[-1].power = l
                c1 = init_params([2, K], seed + 10 * l + 7,
                                 final_activation="identity",
                                 name=f"reconstruction.l{l}.cos1")
                loc_sin0.append(s0)
                loc_sin1.append(s1)
                loc_cos0.append(c0)
                loc_cos1.append(c1)
            r_d = init_params([K] * rd_layers + [K], seed + 99,
                              name="reconstruction.rd")
            return ReconstructionBlock(variant, K, point_dim=2, degree=degree,
                                       loc_sin0=loc_sin0, loc_sin1=loc_sin1,
                                       loc_cos0=loc_cos0, loc_cos1=loc_cos1,
                                       r_d=r_d)
        raise ValueError(f"unknown reconstruction variant {variant!r}")

    raise ValueError(f"unknown block kind {kind!r}")


def _glorot_fill(mlp: Mlp, seed: int) -> None:
    rng = np.random.default_rng(seed)
    for layer in mlp.layers:
        fan_in, fan_out = layer.in_dim, layer.out_dim
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        layer.weights[...] = rng.uniform(-limit, limit, size=layer.weights.shape)


def build_model(geometry: str, variants: tuple, config: dict, seed: int) -> SpectralPinnModel:
    """Assemble a spectral model from (transformation, stepping, reconstruction) tags."""
    tv, sv, rv = variants
    return SpectralPinnModel(
        transformation=build_block("transformation", tv, config, seed),
        time_stepping=build_block("time_stepping", sv, config, seed + 1000),
        reconstruction=build_block("reconstruction", rv, config, seed + 2000),
        geometry=geometry,
        alpha=config.get("alpha", 0.01),
        epsilon=config.get("epsilon", 0.1),
        torus_R=config.get("torus_R", 2.0),
        torus_r=config.get("torus_r", 1.0),
    )


def build_naive_model(geometry: str, config: dict, seed: int) -> NaiveModel:
    """Monolithic tanh MLP on (samples, point, t); 6 layers on the interval,
    26 on the sphere/torus, hidden width equal to the input width unless
    overridden."""
    L = config["n_samples"]
    d = 1 if geometry == "interval" else 2
    in_dim = L + d + 1
    width = config.get("naive_width", in_dim)
    layers = config.get("naive_layers", 6 if geometry == "interval" else 26)
    net = init_params([in_dim] + [width] * (layers - 1) + [1], seed, name="naive")
    return NaiveModel(net, geometry, L,
                      alpha=config.get("alpha", 0.01),
                      epsilon=config.get("epsilon", 0.1),
                      torus_R=config.get("torus_R", 2.0),
                      torus_r=config.get("torus_r", 1.0))


# ---------------------------------------------------------------------------
# Evaluation entry points
# ---------------------------------------------------------------------------


def _point_jets(model, point, seed: Optional[str]) -> list:
    """Jets for the point coordinates, seeding at most one of them."""
    if model.point_dim == 1:
        coords = [np.asarray(point, dtype=float)]
        names = ["x"]
    else:
        theta, phi = point
        coords = [np.asarray(theta, dtype=float), np.asarray(phi, dtype=float)]
        names = ["theta", "phi"]
    return [Jet2(c, 1.0 if seed == n else 0.0, 0.0) for c, n in zip(coords, names)]


def model_forward(model, samples, point, t, tape: Optional[Tape] = None,
                  seed: Optional[str] = None) -> Jet2:
    """Evaluate the model at (samples, point, t); returns the output jet.

    ``point`` is x on the interval or (theta, phi) otherwise; scalars or
    equal-length arrays are accepted.  ``seed`` activates the jet direction
    of one coordinate ('x', 'theta', 'phi' or 't').
    """
    own = tape is None
    if own:
        tape = Tape()
    pj = _point_jets(model, point, seed)
    tj = Jet2(np.asarray(t, dtype=float), 1.0 if seed == "t" else 0.0, 0.0)
    out = model.forward_on_tape(tape, samples, pj, tj)
    if not own:
        return out
    jet = out.jet
    squeeze = np.ndim(t) == 0 and np.ndim(point[0] if model.point_dim == 2 else point) == 0
    if squeeze:
        jet = Jet2(float(np.asarray(jet.value).reshape(-1)[0]),
                   jet.d1 if isinstance(jet.d1, float) else float(np.asarray(jet.d1).reshape(-1)[0]),
                   jet.d2 if isinstance(jet.d2, float) else float(np.asarray(jet.d2).reshape(-1)[0]))
    return jet


def model_derivatives(model, samples, point, t) -> tuple:
    """(u, u_t, spatial operator) at one space-time location.

    The spatial operator is u_xx on the interval and the geometry's
    Laplace-Beltrami expression on the sphere/torus, assembled from one
    jet pass per coordinate.
    """
    if model.geometry == "interval":
        jt = model_forward(model, samples, point, t, seed="t")
        jx = model_forward(model, samples, point, t, seed="x")
        return jt.value, jt.d1, jx.d2

    theta, phi = point
    st = np.sin(theta)
    if np.any(np.abs(st) < 1e-6):
        raise PoleSingularityError("collocation point too close to a pole")
    jt = model_forward(model, samples, point, t, seed="t")
    jth = model_forward(model, samples, point, t, seed="theta")
    jph = model_forward(model, samples, point, t, seed="phi")
    if model.geometry == "sphere":
        lap = jth.d2 + (np.cos(theta) / st) * jth.d1 + jph.d2 / (st * st)
    else:
        R, r = model.torus_R, model.torus_r
        w = R + r * np.cos(theta)
        lap = jth.d2 / r**2 - st * jth.d1 / (r * w) + jph.d2 / w**2
    return jt.value, jt.d1, lap


def reassemble_multi_eval(model, samples, t, points) -> np.ndarray:
    """Evaluate the model at many points for one (samples, t) pair.

    The transformation and time-stepping outputs are computed once and the
    reconstruction is applied per point through the same code path as
    :func:`model_forward`, so results are bit-identical to pointwise calls.
    """
    if len(points) == 0:
        return np.zeros(0)
    if model.is_naive:
        return np.array([
            float(np.asarray(model_forward(model, samples, p, t).value).reshape(-1)[0])
            for p in points
        ])
    tape = Tape()
    c, c_nl = model.coeffs_on_tape(tape, samples)
    tvar = tape.input(_lift_jet(Jet2(np.asarray(t, dtype=float))))
    evolved = model.time_stepping.forward(tape, c, tvar, c_nl)
    cached = evolved.jet.value
    out = []
    for p in points:
        t2 = Tape()
        coeffs = t2.input(Jet2(cached, 0.0, 0.0))
        pj = [t2.input(_lift_jet(j)) for j in _point_jets(model, p, None)]
        val = model.reconstruction.forward(t2, coeffs, pj)
        out.append(float(np.asarray(val.jet.value).reshape(-1)[0]))
    return np.array(out)
