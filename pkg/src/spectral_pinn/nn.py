"""Dense layers, activations, parameter store, Adam, and the epoch loop.

Everything is float64 numpy.  Parameters live in a :class:`ParamSet`
(ordered name -> array); blocks register their arrays there so one Adam
state and one freeze mask cover an arbitrary composition of blocks.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .autodiff import Jet2, Tape, Var, jet_apply_elementary, jet_pow_int

__all__ = [
    "ACTIVATIONS",
    "DenseLayer",
    "Mlp",
    "ParamSet",
    "AdamState",
    "Diverged",
    "init_params",
    "mlp_forward",
    "adam_step",
    "train_loop",
    "save_params",
    "load_params",
]


class Diverged(RuntimeError):
    """Loss became non-finite; carries the partial trace."""

    def __init__(self, message: str, trace: list):
        super().__init__(message)
        self.trace = trace


def _act_tanh(tape, v):
    return tape.record("tanh", (v,))


def _act_identity(tape, v):
    return v


def _act_exp(tape, v):
    return tape.record("exp", (v,))


def _act_sin(tape, v):
    return tape.record("sin", (v,))


ACTIVATIONS = {
    "tanh": _act_tanh,
    "identity": _act_identity,
    "exp": _act_exp,
    "sin": _act_sin,
}


@dataclass
class DenseLayer:
    """Affine map plus an elementwise nonlinearity.

    ``activation`` is one of tanh / identity / exp / sin, or ``sin_pow`` /
    ``cos_pow`` with the integer ``power`` (the degree-l building blocks of
    the spherical reconstruction).  A layer without bias applies y = M v
    exactly.
    """

    weights: np.ndarray
    bias: Optional[np.ndarray] = None
    activation: str = "identity"
    power: int = 0

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def param_count(self) -> int:
        return self.weights.size + (self.bias.size if self.bias is not None else 0)

    def apply(self, tape: Tape, w: Var, x: Var, b: Optional[Var]) -> Var:
        y = tape.affine(w, x, b)
        if self.activation in ACTIVATIONS:
            return ACTIVATIONS[self.activation](tape, y)
        if self.activation == "sin_pow":
            return tape.record("pow_int", (tape.record("sin", (y,)),), n=self.power)
        if self.activation == "cos_pow":
            return tape.record("pow_int", (tape.record("cos", (y,)),), n=self.power)
        raise ValueError(f"unknown activation {self.activation!r}")


class Mlp:
    """Ordered stack of dense layers with a stable parameter prefix."""

    def __init__(self, layers: Sequence[DenseLayer], name: str = "mlp"):
        self.layers = list(layers)
        self.name = name
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError(
                    f"layer widths disagree: {a.out_dim} feeds {b.in_dim}"
                )

    @property
    def param_count(self) -> int:
        return sum(l.param_count for l in self.layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def register(self, params: "ParamSet") -> None:
        for i, layer in enumerate(self.layers):
            params.add(f"{self.name}.{i}.W", layer.weights)
            if layer.bias is not None:
                params.add(f"{self.name}.{i}.b", layer.bias)

    def forward(self, tape: Tape, x: Var) -> Var:
        h = x
        for i, layer in enumerate(self.layers):
            w = tape.parameter(f"{self.name}.{i}.W", layer.weights)
            b = (
                tape.parameter(f"{self.name}.{i}.b", layer.bias)
                if layer.bias is not None
                else None
            )
            h = layer.apply(tape, w, h, b)
        return h


@dataclass
class ConvLayer:
    """Periodic 2-D convolution over a (C, H, W, batch) grid."""

    kernel: np.ndarray           # (C_out, C_in, kh, kw)
    bias: Optional[np.ndarray]
    activation: str = "tanh"

    @property
    def param_count(self) -> int:
        return self.kernel.size + (self.bias.size if self.bias is not None else 0)


class ConvNet:
    """Stack of periodic conv layers, flatten, then one dense layer."""

    def __init__(self, convs: Sequence[ConvLayer], dense: DenseLayer,
                 grid_shape: tuple, name: str = "conv"):
        self.convs = list(convs)
        self.dense = dense
        self.grid_shape = grid_shape
        self.name = name

    @property
    def param_count(self) -> int:
        return sum(c.param_count for c in self.convs) + self.dense.param_count

    def register(self, params: "ParamSet") -> None:
        for i, c in enumerate(self.convs):
            params.add(f"{self.name}.conv{i}.K", c.kernel)
            if c.bias is not None:
                params.add(f"{self.name}.conv{i}.b", c.bias)
        params.add(f"{self.name}.dense.W", self.dense.weights)
        if self.dense.bias is not None:
            params.add(f"{self.name}.dense.b", self.dense.bias)

    def forward(self, tape: Tape, x: Var) -> Var:
        """x is flattened grid samples (H*W, batch); returns (out, batch)."""
        H, W = self.grid_shape
        xv = x.jet.value
        batch = xv.shape[1] if xv.ndim == 2 else 1
        h = tape.reshape(x, (1, H, W, batch))
        for i, c in enumerate(self.convs):
            k = tape.parameter(f"{self.name}.conv{i}.K", c.kernel)
            b = tape.parameter(f"{self.name}.conv{i}.b", c.bias) if c.bias is not None else None
            h = tape.conv2d_periodic(k, h, b)
            if c.activation == "tanh":
                h = tape.record("tanh", (h,))
        flat = tape.reshape(h, (-1, batch))
        w = tape.parameter(f"{self.name}.dense.W", self.dense.weights)
        b = (tape.parameter(f"{self.name}.dense.b", self.dense.bias)
             if self.dense.bias is not None else None)
        return self.dense.apply(tape, w, flat, b)


def init_conv(channels: Sequence[int], kernel_size: int, out_dim: int,
              grid_shape: tuple, seed: int, name: str = "conv") -> ConvNet:
    """Glorot conv stack 1 -> channels... plus a final dense to out_dim."""
    rng = np.random.default_rng(seed)
    convs = []
    chans = [1] + list(channels)
    for ci, co in zip(chans[:-1], chans[1:]):
        fan_in = ci * kernel_size * kernel_size
        fan_out = co * kernel_size * kernel_size
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        K = rng.uniform(-limit, limit, size=(co, ci, kernel_size, kernel_size))
        convs.append(ConvLayer(K, np.zeros(co), "tanh"))
    flat = chans[-1] * grid_shape[0] * grid_shape[1]
    limit = np.sqrt(6.0 / (flat + out_dim))
    dense = DenseLayer(rng.uniform(-limit, limit, size=(out_dim, flat)),
                       np.zeros(out_dim), "identity")
    return ConvNet(convs, dense, grid_shape, name=name)


class ParamSet:
    """Ordered mapping name -> ndarray, shared by blocks, Adam and freezing."""

    def __init__(self):
        self._arrays: dict[str, np.ndarray] = {}

    def add(self, name: str, array: np.ndarray) -> None:
        if name in self._arrays:
            if self._arrays[name] is not array:
                raise ValueError(f"parameter name collision: {name}")
            return
        self._arrays[name] = array

    def names(self) -> list:
        return list(self._arrays)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def __len__(self) -> int:
        return len(self._arrays)

    @property
    def count(self) -> int:
        return sum(int(a.size) for a in self._arrays.values())

    def copy_values(self) -> dict:
        return {k: v.copy() for k, v in self._arrays.items()}

    def set_values(self, values: dict) -> None:
        for k, v in values.items():
            self._arrays[k][...] = v


def init_params(widths: Sequence[int], seed: int, activation: str = "tanh",
                final_activation: str = "identity", bias: bool = True,
                name: str = "mlp") -> Mlp:
    """Glorot-uniform MLP with zero biases, reproducible from the seed.

    ``widths`` lists layer sizes input..output; e.g. [103, 103, 1] builds
    two dense layers.
    """
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise ValueError(f"invalid widths {widths!r}")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        b = np.zeros(fan_out) if bias else None
        act = final_activation if i == len(widths) - 2 else activation
        layers.append(DenseLayer(W, b, act))
    return Mlp(layers, name=name)


def mlp_forward(net: Mlp, x: Jet2, tape: Optional[Tape] = None) -> Jet2:
    """Evaluate the MLP on a jet input; records on the tape when given."""
    if np.shape(x.value)[0] != net.in_dim:
        raise ValueError(
            f"input width {np.shape(x.value)[0]} != first layer {net.in_dim}"
        )
    own = tape is None
    if own:
        tape = Tape()
    v = net.forward(tape, tape.input(x))
    return v.jet if own else v


@dataclass
class AdamState:
    """First/second moment accumulators plus the step counter."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: ParamSet, grads: dict,
              frozen: Iterable[str] = ()) -> None:
    """One bias-corrected adaptive update, in place; frozen names skipped."""
    frozen = set(frozen)
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for name in params.names():
        if name in frozen or name not in grads:
            continue
        g = grads[name]
        p = params[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def train_loop(params: ParamSet,
               loss_and_grads: Callable[[np.ndarray], tuple],
               n_samples: int,
               epochs: int,
               batch_size: int = 256,
               lr: float = 1e-3,
               seed: int = 0,
               frozen: Iterable[str] = (),
               state: Optional[AdamState] = None) -> list:
    """Minibatch epochs over sample indices; returns per-epoch mean loss.

    ``loss_and_grads`` maps an index batch to (loss, grads dict).  Raises
    :class:`Diverged` (with the partial trace attached) on non-finite loss.
    """
    if state is None:
        state = AdamState(lr=lr)
    rng = np.random.default_rng(seed)
    trace = []
    frozen = set(frozen)
    all_frozen = set(params.names()) <= frozen
    for epoch in range(epochs):
        order = rng.permutation(n_samples)
        losses = []
        for start in range(0, n_samples, batch_size):
            idx = order[start:start + batch_size]
            loss, grads = loss_and_grads(idx)
            if not np.isfinite(loss):
                raise Diverged(f"loss diverged at epoch {epoch}", trace)
            losses.append(loss)
            if not all_frozen:
                adam_step(state, params, grads, frozen)
        trace.append(float(np.mean(losses)))
    return trace


# ---------------------------------------------------------------------------
# Checkpoint format: little-endian binary
#   magic "SPNNPAR1", u32 count, then per entry:
#   u16 name length, name utf-8, u8 ndim, u32 dims..., float64 row-major data
# ---------------------------------------------------------------------------

_MAGIC = b"SPNNPAR1"


def save_params(path, params: ParamSet, header: Optional[dict] = None) -> None:
    """Write all parameters (plus an optional flat-text header) to disk."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        head = "" if not header else "\n".join(f"{k}={v}" for k, v in sorted(header.items()))
        hb = head.encode("utf-8")
        fh.write(struct.pack("<I", len(hb)))
        fh.write(hb)
        names = params.names()
        fh.write(struct.pack("<I", len(names)))
        for name in names:
            arr = np.ascontiguousarray(params[name], dtype="<f8")
            nb = name.encode("utf-8")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                fh.write(struct.pack("<I", d))
            fh.write(arr.tobytes())


def load_params(path) -> tuple:
    """Read a checkpoint; returns (values dict, header dict)."""
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError(f"{path} is not a parameter checkpoint")
        (hlen,) = struct.unpack("<I", fh.read(4))
        head = fh.read(hlen).decode("utf-8")
        header = dict(line.split("=", 1) for line in head.splitlines() if line)
        (count,) = struct.unpack("<I", fh.read(4))
        values = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", fh.read(2))
            name = fh.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
            n = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(shape)
            values[name] = data.astype(float)
        return values, header
