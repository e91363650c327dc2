"""Second-order forward jets with a reverse-mode tape over them.

A :class:`Jet2` carries a value together with the first and second
directional derivative along a single seeded input direction.  PDE
residuals need ``u_t``, ``u_x``, ``u_xx`` and friends, which are obtained
by one jet pass per coordinate; no mixed partials are ever required.

A :class:`Tape` records elementary operations on jet-valued variables and
produces, in one backward sweep, the gradient of any component (value,
d1 or d2) of an output with respect to every registered parameter.  The
local partials stored on the tape are themselves jets, which is exactly
what makes gradients of *derivatives* (e.g. d(u_xx)/d(theta)) come out of
the same machinery.

Jet components may be floats or numpy arrays of any shape; all rules are
elementwise, so a whole minibatch flows through one recorded graph.  Zero
tangents are kept as the float ``0.0`` to avoid dead array traffic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

ArrayLike = Union[float, np.ndarray]

__all__ = [
    "Jet2",
    "Tape",
    "Var",
    "GradReport",
    "jet_seed",
    "jet_apply_elementary",
    "tape_record",
    "tape_backward",
    "finite_diff_check",
]


def _is_zero(x: ArrayLike) -> bool:
    return isinstance(x, float) and x == 0.0


def _add(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    return a + b


def _sub(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    if _is_zero(b):
        return a
    if _is_zero(a):
        return -b
    return a - b


def _mul(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    if _is_zero(a) or _is_zero(b):
        return 0.0
    return a * b


def _neg(a: ArrayLike) -> ArrayLike:
    return 0.0 if _is_zero(a) else -a


class Jet2:
    """Truncated second-order Taylor triple (value, d1, d2).

    Constants have d1 = d2 = 0; a seeded variable has d1 = 1, d2 = 0.
    Arithmetic follows the exact second-order propagation rules, so d1/d2
    agree with analytic derivatives up to roundoff.
    """

    __slots__ = ("value", "d1", "d2")

    def __init__(self, value: ArrayLike, d1: ArrayLike = 0.0, d2: ArrayLike = 0.0):
        self.value = value
        self.d1 = d1
        self.d2 = d2

    def __repr__(self) -> str:
        return f"Jet2({self.value!r}, d1={self.d1!r}, d2={self.d2!r})"

    # -- arithmetic ---------------------------------------------------------
    @staticmethod
    def _coerce(x) -> "Jet2":
        if isinstance(x, Jet2):
            return x
        return Jet2(float(x) if np.isscalar(x) else np.asarray(x, dtype=float))

    def __add__(self, other) -> "Jet2":
        o = Jet2._coerce(other)
        return Jet2(self.value + o.value, _add(self.d1, o.d1), _add(self.d2, o.d2))

    __radd__ = __add__

    def __sub__(self, other) -> "Jet2":
        o = Jet2._coerce(other)
        return Jet2(self.value - o.value, _sub(self.d1, o.d1), _sub(self.d2, o.d2))

    def __rsub__(self, other) -> "Jet2":
        return Jet2._coerce(other).__sub__(self)

    def __mul__(self, other) -> "Jet2":
        o = Jet2._coerce(other)
        d1 = _add(_mul(self.d1, o.value), _mul(self.value, o.d1))
        d2 = _add(
            _add(_mul(self.d2, o.value), _mul(self.value, o.d2)),
            _mul(2.0, _mul(self.d1, o.d1)),
        )
        return Jet2(self.value * o.value, d1, d2)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Jet2":
        o = Jet2._coerce(other)
        if np.any(o.value == 0.0):
            raise ZeroDivisionError("jet division by zero")
        v = self.value / o.value
        d1 = _mul(_sub(self.d1, _mul(v, o.d1)), 1.0 / o.value)
        d2 = _mul(
            _sub(_sub(self.d2, _mul(v, o.d2)), _mul(2.0, _mul(d1, o.d1))),
            1.0 / o.value,
        )
        return Jet2(v, d1, d2)

    def __rtruediv__(self, other) -> "Jet2":
        return Jet2._coerce(other).__truediv__(self)

    def __neg__(self) -> "Jet2":
        return Jet2(-self.value, _neg(self.d1), _neg(self.d2))

    def __pow__(self, n: int) -> "Jet2":
        return jet_pow_int(self, n)


def jet_seed(value: ArrayLike, active: bool = True) -> Jet2:
    """Seed an input variable: (value, 1, 0) when active, else a constant."""
    value = float(value) if np.isscalar(value) else np.asarray(value, dtype=float)
    if not np.all(np.isfinite(value)):
        raise ValueError("cannot seed a non-finite value")
    return Jet2(value, 1.0 if active else 0.0, 0.0)


def jet_tanh(a: Jet2) -> Jet2:
    t = np.tanh(a.value)
    s = 1.0 - t * t
    d1 = _mul(s, a.d1)
    d2 = _sub(_mul(s, a.d2), _mul(2.0 * t * s, _mul(a.d1, a.d1)))
    return Jet2(t, d1, d2)


def jet_exp(a: Jet2) -> Jet2:
    e = np.exp(a.value)
    return Jet2(e, _mul(e, a.d1), _mul(e, _add(a.d2, _mul(a.d1, a.d1))))


def jet_sin(a: Jet2) -> Jet2:
    s, c = np.sin(a.value), np.cos(a.value)
    return Jet2(s, _mul(c, a.d1), _sub(_mul(c, a.d2), _mul(s, _mul(a.d1, a.d1))))


def jet_cos(a: Jet2) -> Jet2:
    s, c = np.sin(a.value), np.cos(a.value)
    return Jet2(c, _neg(_mul(s, a.d1)), _neg(_add(_mul(s, a.d2), _mul(c, _mul(a.d1, a.d1)))))


def jet_pow_int(a: Jet2, n: int) -> Jet2:
    if not isinstance(n, (int, np.integer)):
        raise ValueError(f"pow_int exponent must be an integer, got {n!r}")
    n = int(n)
    if n < 0 and np.any(a.value == 0.0):
        raise ZeroDivisionError("negative integer power of zero")
    if n == 0:
        one = 1.0 if np.isscalar(a.value) else np.ones_like(a.value)
        return Jet2(one, 0.0, 0.0)
    v = a.value ** n
    f1 = n * a.value ** (n - 1)
    f2 = n * (n - 1) * a.value ** (n - 2) if n != 1 else 0.0
    d1 = _mul(f1, a.d1)
    d2 = _add(_mul(f1, a.d2), _mul(f2, _mul(a.d1, a.d1)))
    return Jet2(v, d1, d2)


_UNARY = {
    "neg": lambda a: -a,
    "tanh": jet_tanh,
    "exp": jet_exp,
    "sin": jet_sin,
    "cos": jet_cos,
}

_BINARY = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: a / b,
}


def jet_apply_elementary(op: str, args: Sequence[Jet2], n: Optional[int] = None) -> Jet2:
    """Apply a named elementary op to jets with exact Taylor propagation.

    ``op`` is one of add, sub, mul, div, neg, tanh, exp, sin, cos, pow_int
    (the latter takes the integer exponent via ``n``).
    """
    if op == "pow_int":
        if n is None:
            raise ValueError("pow_int requires the exponent argument n")
        return jet_pow_int(args[0], n)
    if op in _UNARY:
        return _UNARY[op](args[0])
    if op in _BINARY:
        return _BINARY[op](args[0], args[1])
    raise ValueError(f"unknown elementary op {op!r}")


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------


@dataclass
class GradReport:
    """Gradients of one scalar output component per parameter name."""

    grads: dict
    checked_against_fd: Optional[float] = None

    def __getitem__(self, name: str) -> np.ndarray:
        return self.grads[name]


class _Node:
    __slots__ = ("op", "args", "jet", "partials", "extra", "needs_grad")

    def __init__(self, op, args, jet, partials=None, extra=None, needs_grad=False):
        self.op = op
        self.args = args          # operand node ids
        self.jet = jet            # Jet2 payload
        self.partials = partials  # local partial jets, aligned with args
        self.extra = extra        # op-specific data (matrices, axes, ...)
        self.needs_grad = needs_grad


class Var:
    """Handle to a node on a tape; overloads arithmetic to record ops."""

    __slots__ = ("tape", "idx")

    def __init__(self, tape: "Tape", idx: int):
        self.tape = tape
        self.idx = idx

    @property
    def jet(self) -> Jet2:
        return self.tape.nodes[self.idx].jet

    @property
    def value(self) -> ArrayLike:
        return self.jet.value

    def _lift(self, other) -> "Var":
        if isinstance(other, Var):
            return other
        return self.tape.constant(Jet2._coerce(other))

    def __add__(self, other):
        return self.tape.record("add", (self, self._lift(other)))

    __radd__ = __add__

    def __sub__(self, other):
        return self.tape.record("sub", (self, self._lift(other)))

    def __rsub__(self, other):
        return self.tape.record("sub", (self._lift(other), self))

    def __mul__(self, other):
        return self.tape.record("mul", (self, self._lift(other)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.tape.record("div", (self, self._lift(other)))

    def __rtruediv__(self, other):
        return self.tape.record("div", (self._lift(other), self))

    def __neg__(self):
        return self.tape.record("neg", (self,))

    def __pow__(self, n: int):
        return self.tape.record("pow_int", (self,), n=n)

    def tanh(self):
        return self.tape.record("tanh", (self,))

    def exp(self):
        return self.tape.record("exp", (self,))

    def sin(self):
        return self.tape.record("sin", (self,))

    def cos(self):
        return self.tape.record("cos", (self,))


class Tape:
    """Append-only record of elementary operations over Jet2 payloads.

    The tape is single-owner during recording.  ``parameter`` registers a
    named leaf whose gradient is produced by :meth:`backward`; every other
    leaf is a constant.  Nodes are topologically ordered by construction.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self.param_index: dict[str, int] = {}

    # -- leaves -------------------------------------------------------------
    def constant(self, jet) -> Var:
        if not isinstance(jet, Jet2):
            jet = Jet2._coerce(jet)
        self.nodes.append(_Node("const", (), jet))
        return Var(self, len(self.nodes) - 1)

    def input(self, jet: Jet2) -> Var:
        self.nodes.append(_Node("input", (), jet))
        return Var(self, len(self.nodes) - 1)

    def parameter(self, name: str, value: np.ndarray) -> Var:
        if name in self.param_index:
            return Var(self, self.param_index[name])
        jet = Jet2(value, 0.0, 0.0)
        self.nodes.append(_Node("param", (), jet, needs_grad=True))
        idx = len(self.nodes) - 1
        self.param_index[name] = idx
        return Var(self, idx)

    # -- recording ----------------------------------------------------------
    def record(self, op: str, args: Sequence[Var], n: Optional[int] = None) -> Var:
        ids = tuple(a.idx for a in args)
        jets = [self.nodes[i].jet for i in ids]
        needs = any(self.nodes[i].needs_grad for i in ids)

        if op == "add":
            out, partials = jets[0] + jets[1], None
        elif op == "sub":
            out, partials = jets[0] - jets[1], None
        elif op == "neg":
            out, partials = -jets[0], None
        elif op == "mul":
            out, partials = jets[0] * jets[1], (jets[1], jets[0])
        elif op == "div":
            out = jets[0] / jets[1]
            inv = Jet2(1.0) / jets[1]
            partials = (inv, -out * inv)
        elif op == "tanh":
            out = jet_tanh(jets[0])
            a = jets[0]
            t = out.value
            s = 1.0 - t * t
            # d/dv tanh = s, with its own jet so derivative info propagates
            p = Jet2(
                s,
                _mul(-2.0 * t * s, a.d1),
                _sub(_mul(-2.0 * t * s, a.d2),
                     _mul(2.0 * s * (1.0 - 3.0 * t * t), _mul(a.d1, a.d1))),
            )
            partials = (p,)
        elif op == "exp":
            out = jet_exp(jets[0])
            partials = (out,)
        elif op == "sin":
            out = jet_sin(jets[0])
            partials = (jet_cos(jets[0]),)
        elif op == "cos":
            out = jet_cos(jets[0])
            partials = (-jet_sin(jets[0]),)
        elif op == "pow_int":
            out = jet_pow_int(jets[0], n)
            if n == 0:
                partials = (Jet2(0.0),)
            else:
                partials = (Jet2(float(n)) * jet_pow_int(jets[0], n - 1),)
        else:
            raise ValueError(f"unknown tape op {op!r}")

        self.nodes.append(_Node(op, ids, out, partials, needs_grad=needs))
        return Var(self, len(self.nodes) - 1)

    # -- structured ops -----------------------------------------------------
    def affine(self, w: Var, x: Var, b: Optional[Var] = None) -> Var:
        """y = W @ x (+ b), with W/b typically parameter leaves."""
        W = self.nodes[w.idx].jet.value
        xj = self.nodes[x.idx].jet
        xshape = np.shape(xj.value)
        v = W @ xj.value
        d1 = 0.0 if _is_zero(xj.d1) else W @ np.broadcast_to(np.asarray(xj.d1, dtype=float), xshape)
        d2 = 0.0 if _is_zero(xj.d2) else W @ np.broadcast_to(np.asarray(xj.d2, dtype=float), xshape)
        ids = (w.idx, x.idx)
        if b is not None:
            bv = self.nodes[b.idx].jet.value
            v = v + (bv[:, None] if v.ndim == 2 and bv.ndim == 1 else bv)
            ids = (w.idx, x.idx, b.idx)
        needs = any(self.nodes[i].needs_grad for i in ids)
        self.nodes.append(_Node("affine", ids, Jet2(v, d1, d2), needs_grad=needs))
        return Var(self, len(self.nodes) - 1)

    def matmul_const(self, M: np.ndarray, x: Var) -> Var:
        xj = self.nodes[x.idx].jet
        xshape = np.shape(xj.value)
        v = M @ xj.value
        d1 = 0.0 if _is_zero(xj.d1) else M @ np.broadcast_to(np.asarray(xj.d1, dtype=float), xshape)
        d2 = 0.0 if _is_zero(xj.d2) else M @ np.broadcast_to(np.asarray(xj.d2, dtype=float), xshape)
        needs = self.nodes[x.idx].needs_grad
        self.nodes.append(
            _Node("matmul_const", (x.idx,), Jet2(v, d1, d2), extra=M, needs_grad=needs)
        )
        return Var(self, len(self.nodes) - 1)

    def conv2d_periodic(self, k: Var, x: Var, b: Optional[Var] = None) -> Var:
        """Periodic 2-D convolution; x is (C_in, H, W, B), kernel (C_out, C_in, kh, kw).

        Convolutions sit on the sample path only, which never carries a
        seeded direction; tangent inputs are rejected rather than silently
        dropped.
        """
        xj = self.nodes[x.idx].jet
        if not (_is_zero(xj.d1) and _is_zero(xj.d2)):
            raise ValueError("conv2d_periodic does not propagate jet tangents")
        K = self.nodes[k.idx].jet.value
        xv = self.nodes[x.idx].jet.value
        co, ci, kh, kw = K.shape
        v = _conv_forward(K, xv)
        ids = (k.idx, x.idx)
        if b is not None:
            bv = self.nodes[b.idx].jet.value
            v = v + bv[:, None, None, None]
            ids = (k.idx, x.idx, b.idx)
        needs = any(self.nodes[i].needs_grad for i in ids)
        self.nodes.append(_Node("conv2d", ids, Jet2(v, 0.0, 0.0), needs_grad=needs))
        return Var(self, len(self.nodes) - 1)

    def reshape(self, x: Var, shape: tuple) -> Var:
        xj = self.nodes[x.idx].jet
        v = np.reshape(xj.value, shape)
        d1 = xj.d1 if _is_zero(xj.d1) else np.reshape(
            np.broadcast_to(xj.d1, np.shape(xj.value)), shape)
        d2 = xj.d2 if _is_zero(xj.d2) else np.reshape(
            np.broadcast_to(xj.d2, np.shape(xj.value)), shape)
        needs = self.nodes[x.idx].needs_grad
        self.nodes.append(_Node("reshape", (x.idx,), Jet2(v, d1, d2),
                                extra=np.shape(xj.value), needs_grad=needs))
        return Var(self, len(self.nodes) - 1)

    def select(self, x: Var, component: str) -> Var:
        """Extract one jet component as a plain (constant-tangent) value."""
        xj = self.nodes[x.idx].jet
        comp = {"value": xj.value, "d1": xj.d1, "d2": xj.d2}[component]
        if _is_zero(comp):
            comp = np.zeros_like(xj.value) if not np.isscalar(xj.value) else 0.0
        needs = self.nodes[x.idx].needs_grad
        self.nodes.append(
            _Node("select", (x.idx,), Jet2(comp, 0.0, 0.0), extra=component, needs_grad=needs)
        )
        return Var(self, len(self.nodes) - 1)

    def concat0(self, parts: Sequence[Var]) -> Var:
        """Concatenate along axis 0; operands must be 2-D (dim, batch)."""
        jets = [self.nodes[p.idx].jet for p in parts]
        shapes = [np.shape(j.value) for j in jets]
        v = np.concatenate([j.value for j in jets], axis=0)

        def cat(comp_idx):
            comps = [(j.d1 if comp_idx == 1 else j.d2) for j in jets]
            if all(_is_zero(c) for c in comps):
                return 0.0
            full = []
            for c, s in zip(comps, shapes):
                arr = np.broadcast_to(np.asarray(c, dtype=float), s) if not (
                    isinstance(c, np.ndarray) and c.shape == s) else c
                full.append(arr)
            return np.concatenate(full, axis=0)

        needs = any(self.nodes[p.idx].needs_grad for p in parts)
        self.nodes.append(
            _Node("concat0", tuple(p.idx for p in parts), Jet2(v, cat(1), cat(2)),
                  extra=[s[0] for s in shapes], needs_grad=needs)
        )
        return Var(self, len(self.nodes) - 1)

    def repeat_batch(self, x: Var, reps: int) -> Var:
        """Repeat each batch column `reps` times consecutively (2-D only)."""
        xj = self.nodes[x.idx].jet
        v = np.repeat(xj.value, reps, axis=1)
        d1 = xj.d1 if _is_zero(xj.d1) else np.repeat(
            np.broadcast_to(xj.d1, np.shape(xj.value)), reps, axis=1)
        d2 = xj.d2 if _is_zero(xj.d2) else np.repeat(
            np.broadcast_to(xj.d2, np.shape(xj.value)), reps, axis=1)
        needs = self.nodes[x.idx].needs_grad
        self.nodes.append(_Node("repeat_batch", (x.idx,), Jet2(v, d1, d2),
                                extra=(np.shape(xj.value), reps), needs_grad=needs))
        return Var(self, len(self.nodes) - 1)

    def sum_axis0(self, x: Var) -> Var:
        xj = self.nodes[x.idx].jet
        v = np.sum(xj.value, axis=0)
        d1 = 0.0 if _is_zero(xj.d1) else np.sum(xj.d1, axis=0)
        d2 = 0.0 if _is_zero(xj.d2) else np.sum(xj.d2, axis=0)
        needs = self.nodes[x.idx].needs_grad
        self.nodes.append(_Node("sum_axis0", (x.idx,), Jet2(v, d1, d2),
                                extra=np.shape(xj.value), needs_grad=needs))
        return Var(self, len(self.nodes) - 1)

    def mean_all(self, x: Var) -> Var:
        xj = self.nodes[x.idx].jet
        n = int(np.size(xj.value))
        v = float(np.sum(xj.value)) / n
        d1 = 0.0 if _is_zero(xj.d1) else float(np.sum(np.broadcast_to(xj.d1, np.shape(xj.value)))) / n
        d2 = 0.0 if _is_zero(xj.d2) else float(np.sum(np.broadcast_to(xj.d2, np.shape(xj.value)))) / n
        needs = self.nodes[x.idx].needs_grad
        self.nodes.append(_Node("mean_all", (x.idx,), Jet2(v, d1, d2),
                                extra=(np.shape(xj.value), n), needs_grad=needs))
        return Var(self, len(self.nodes) - 1)

    # -- backward -----------------------------------------------------------
    def backward(self, output: Var, component: str = "value",
                 seed: tuple = None) -> GradReport:
        return tape_backward(self, output.idx, component, seed=seed)


def _conv_forward(K: np.ndarray, x: np.ndarray) -> np.ndarray:
    co, ci, kh, kw = K.shape
    out = None
    for dh in range(kh):
        for dw in range(kw):
            shifted = np.roll(x, shift=(-(dh - kh // 2), -(dw - kw // 2)), axis=(1, 2))
            term = np.einsum("oc,chwb->ohwb", K[:, :, dh, dw], shifted)
            out = term if out is None else out + term
    return out


def _conv_backward_input(K: np.ndarray, g: np.ndarray) -> np.ndarray:
    co, ci, kh, kw = K.shape
    out = None
    for dh in range(kh):
        for dw in range(kw):
            shifted = np.roll(g, shift=(dh - kh // 2, dw - kw // 2), axis=(1, 2))
            term = np.einsum("oc,ohwb->chwb", K[:, :, dh, dw], shifted)
            out = term if out is None else out + term
    return out


def _conv_backward_kernel(x: np.ndarray, g: np.ndarray, kh: int, kw: int) -> np.ndarray:
    grad = np.zeros((g.shape[0], x.shape[0], kh, kw))
    for dh in range(kh):
        for dw in range(kw):
            shifted = np.roll(x, shift=(-(dh - kh // 2), -(dw - kw // 2)), axis=(1, 2))
            grad[:, :, dh, dw] = np.einsum("ohwb,chwb->oc", g, shifted)
    return grad


def tape_record(tape: Tape, op: str, args: Sequence[Var], n: Optional[int] = None) -> Var:
    """Record one elementary op on the tape; returns the new variable."""
    return tape.record(op, args, n=n)


def _transpose_apply(p: Jet2, s: tuple) -> tuple:
    """Adjoint of jet-multiplication by partial p, applied to cotangent s."""
    s0, s1, s2 = s
    c0 = _add(_add(_mul(p.value, s0), _mul(p.d1, s1)), _mul(p.d2, s2))
    c1 = _add(_mul(p.value, s1), _mul(2.0, _mul(p.d1, s2)))
    c2 = _mul(p.value, s2)
    return (c0, c1, c2)


def _acc(store: list, idx: int, contrib: tuple) -> None:
    cur = store[idx]
    if cur is None:
        store[idx] = list(contrib)
    else:
        cur[0] = _add(cur[0], contrib[0])
        cur[1] = _add(cur[1], contrib[1])
        cur[2] = _add(cur[2], contrib[2])


def _reduce_to_shape(g: ArrayLike, shape: tuple) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if g.shape == tuple(shape):
        return g
    # sum out broadcasted axes (trailing batch axes and expanded dims)
    while g.ndim > len(shape):
        g = g.sum(axis=-1)
    for ax, (gs, ps) in enumerate(zip(g.shape, shape)):
        if gs != ps:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def tape_backward(tape: Tape, output: int, component: str = "value",
                  seed: tuple = None) -> GradReport:
    """Gradients of one component of the output jet w.r.t. all parameters.

    ``component`` selects which part of the output jet is differentiated:
    'value' gives plain reverse-mode gradients, 'd1'/'d2' give gradients of
    the first/second directional derivative.  A custom ``seed`` triple
    (weight on d2, half-weight on d1, weight on value) may be supplied for
    mixed objectives; when given, the gradient of
    seed[2]*value + 2*seed[1]*d1 + seed[0]*d2 is returned.
    """
    if isinstance(output, Var):
        output = output.idx
    nodes = tape.nodes
    if output >= len(nodes):
        raise IndexError("output node not on tape")

    cot: list = [None] * (output + 1)
    if seed is None:
        seed = {"value": (1.0, 0.0, 0.0), "d1": (0.0, 1.0, 0.0), "d2": (0.0, 0.0, 1.0)}[component]
    cot[output] = list(seed)

    grads = {name: None for name in tape.param_index}
    param_at = {idx: name for name, idx in tape.param_index.items()}

    for i in range(output, -1, -1):
        c = cot[i]
        if c is None:
            continue
        node = nodes[i]
        if not node.needs_grad and node.op not in ("param",):
            continue
        op = node.op
        # contributions may carry broadcast batch axes; fold them back onto
        # this node's own shape before propagating further
        vshape = np.shape(node.jet.value)
        c = [ci if _is_zero(ci) or np.shape(ci) == vshape else _reduce_to_shape(ci, vshape)
             for ci in c]

        if op in ("const", "input"):
            continue
        if op == "param":
            name = param_at[i]
            g = _reduce_to_shape(c[0], np.shape(node.jet.value))
            grads[name] = g if grads[name] is None else grads[name] + g
            continue
        if op in ("add",):
            for a in node.args:
                _acc(cot, a, c)
            continue
        if op == "sub":
            _acc(cot, node.args[0], c)
            _acc(cot, node.args[1], (_neg(c[0]), _neg(c[1]), _neg(c[2])))
            continue
        if op == "neg":
            _acc(cot, node.args[0], (_neg(c[0]), _neg(c[1]), _neg(c[2])))
            continue
        if op in ("mul", "div", "tanh", "exp", "sin", "cos", "pow_int"):
            for a, p in zip(node.args, node.partials):
                if nodes[a].needs_grad:
                    _acc(cot, a, _transpose_apply(p, tuple(c)))
            continue
        if op == "affine":
            w_idx, x_idx = node.args[0], node.args[1]
            W = nodes[w_idx].jet.value
            xj = nodes[x_idx].jet
            if nodes[x_idx].needs_grad:
                _acc(cot, x_idx, tuple(0.0 if _is_zero(ci) else W.T @ ci for ci in c))
            if nodes[w_idx].needs_grad:
                gW = _outer_acc(c, xj, np.shape(xj.value), np.shape(W))
                grads_name = param_at.get(w_idx)
                if grads_name is not None:
                    grads[grads_name] = gW if grads[grads_name] is None else grads[grads_name] + gW
                else:
                    _acc(cot, w_idx, (gW, 0.0, 0.0))
            if len(node.args) == 3 and nodes[node.args[2]].needs_grad:
                b_idx = node.args[2]
                gb = c[0]
                if not _is_zero(gb):
                    gb = _reduce_to_shape(gb, np.shape(nodes[b_idx].jet.value))
                    name = param_at.get(b_idx)
                    if name is not None:
                        grads[name] = gb if grads[name] is None else grads[name] + gb
                    else:
                        _acc(cot, b_idx, (gb, 0.0, 0.0))
            continue
        if op == "matmul_const":
            M = node.extra
            _acc(cot, node.args[0], tuple(0.0 if _is_zero(ci) else M.T @ ci for ci in c))
            continue
        if op == "conv2d":
            k_idx, x_idx = node.args[0], node.args[1]
            K = nodes[k_idx].jet.value
            g0 = c[0]
            if not _is_zero(g0):
                g0 = np.asarray(g0, dtype=float)
                if nodes[x_idx].needs_grad:
                    _acc(cot, x_idx, (_conv_backward_input(K, g0), 0.0, 0.0))
                if nodes[k_idx].needs_grad:
                    gK = _conv_backward_kernel(nodes[x_idx].jet.value, g0, K.shape[2], K.shape[3])
                    name = param_at.get(k_idx)
                    grads[name] = gK if grads[name] is None else grads[name] + gK
                if len(node.args) == 3:
                    b_idx = node.args[2]
                    name = param_at.get(b_idx)
                    if name is not None:
                        gb = g0.sum(axis=(1, 2, 3))
                        grads[name] = gb if grads[name] is None else grads[name] + gb
            continue
        if op == "reshape":
            orig = node.extra
            part = tuple(ci if _is_zero(ci) else np.reshape(ci, orig) for ci in c)
            _acc(cot, node.args[0], part)
            continue
        if op == "select":
            comp = node.extra
            z = (0.0, 0.0, 0.0)
            if comp == "value":
                _acc(cot, node.args[0], (c[0], z[1], z[2]))
            elif comp == "d1":
                _acc(cot, node.args[0], (0.0, c[0], 0.0))
            else:
                _acc(cot, node.args[0], (0.0, 0.0, c[0]))
            continue
        if op == "concat0":
            sizes = node.extra
            off = 0
            for a, sz in zip(node.args, sizes):
                if nodes[a].needs_grad:
                    part = tuple(
                        0.0 if _is_zero(ci) else np.asarray(ci)[off:off + sz] for ci in c
                    )
                    _acc(cot, a, part)
                off += sz
            continue
        if op == "repeat_batch":
            (shape, reps) = node.extra
            part = tuple(
                0.0 if _is_zero(ci)
                else np.asarray(ci).reshape(shape[0], shape[1], reps).sum(axis=2)
                for ci in c
            )
            _acc(cot, node.args[0], part)
            continue
        if op == "sum_axis0":
            shape = node.extra
            part = tuple(
                0.0 if _is_zero(ci) else np.broadcast_to(np.asarray(ci)[None, ...], shape)
                for ci in c
            )
            _acc(cot, node.args[0], part)
            continue
        if op == "mean_all":
            shape, nsz = node.extra
            part = tuple(
                0.0 if _is_zero(ci) else np.broadcast_to(np.asarray(ci) / nsz, shape)
                for ci in c
            )
            _acc(cot, node.args[0], part)
            continue
        raise ValueError(f"no backward rule for op {op!r}")

    out = {}
    for name, idx in tape.param_index.items():
        g = grads[name]
        if g is None:
            g = np.zeros_like(np.asarray(nodes[idx].jet.value, dtype=float))
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        out[name] = g
    return GradReport(out)


def _outer_acc(c: tuple, xj: Jet2, xshape: tuple, wshape: tuple) -> np.ndarray:
    """Weight gradient of an affine node: sum over batch of <cotangent, input jet>."""
    comps = [(c[0], xj.value), (c[1], xj.d1), (c[2], xj.d2)]
    total = None
    for ci, xi in comps:
        if _is_zero(ci) or _is_zero(xi):
            continue
        ci = np.asarray(ci, dtype=float)
        xi = np.broadcast_to(np.asarray(xi, dtype=float), xshape)
        if ci.ndim == 1 and xi.ndim == 1:
            term = np.outer(ci, xi)
        elif ci.ndim == 2 and xi.ndim == 2:
            term = ci @ xi.T
        else:
            ci2 = ci[:, None] if ci.ndim == 1 else ci
            xi2 = xi[:, None] if xi.ndim == 1 else xi
            term = ci2 @ np.broadcast_to(xi2, (xi2.shape[0], ci2.shape[1])).T
        total = term if total is None else total + term
    if total is None:
        total = np.zeros(wshape)
    return total


# ---------------------------------------------------------------------------
# Finite-difference oracle
# ---------------------------------------------------------------------------


def finite_diff_check(f: Callable[[Jet2], Jet2], point: float, h: float = 1e-4) -> float:
    """Max relative error of jet d1/d2 against central differences of f.

    f takes and returns a Jet2; it is evaluated with plain (constant) jets
    at point±h for the difference quotients and with a seeded jet for the
    derivatives under test.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    out = f(jet_seed(point))
    fp = f(Jet2(point + h)).value
    fm = f(Jet2(point - h)).value
    f0 = f(Jet2(point)).value
    fd1 = (fp - fm) / (2.0 * h)
    fd2 = (fp - 2.0 * f0 + fm) / (h * h)
    err = 0.0
    for jet_val, fd_val in ((out.d1, fd1), (out.d2, fd2)):
        jv = float(jet_val) if np.isscalar(jet_val) or np.ndim(jet_val) == 0 else jet_val
        scale = max(abs(float(np.max(np.abs(fd_val)))), 1.0)
        err = max(err, float(np.max(np.abs(np.asarray(jv) - fd_val))) / scale)
    return err
