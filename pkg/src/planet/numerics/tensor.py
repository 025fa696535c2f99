"""Dense float64 tensors with tape-based reverse-mode differentiation.

A ``Tape`` records every operation whose inputs require gradients, in
creation order (which is automatically topological). ``backward`` walks the
tape once in reverse, accumulating into ``.grad`` buffers on the leaves.
Forward results are checked for NaN/Inf after every op; set
``PLANET_CHECK_FINITE=0`` to skip the check in throughput-sensitive runs.
"""

import os
from contextlib import contextmanager

import numpy as np

from ..errors import ContractError, NumericsError
from . import kernels

_CHECK_FINITE = os.environ.get("PLANET_CHECK_FINITE", "1") != "0"


class Tape:
    """Ordered record of executed ops; one per training step."""

    def __init__(self):
        self.nodes = []


_TAPE: Tape | None = None


@contextmanager
def tape():
    """Record ops on a fresh tape; yields the tape."""
    global _TAPE
    prev, _TAPE = _TAPE, Tape()
    try:
        yield _TAPE
    finally:
        _TAPE = prev


@contextmanager
def no_grad():
    global _TAPE
    prev, _TAPE = _TAPE, None
    try:
        yield
    finally:
        _TAPE = prev


class _Node:
    __slots__ = ("out", "parents", "bwd")

    def __init__(self, out, parents, bwd):
        self.out = out
        self.parents = parents
        self.bwd = bwd


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.node: _Node | None = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def constant(data) -> Tensor:
    """Non-differentiable tensor (detached constant)."""
    return Tensor(data)


def stop_grad(x: Tensor) -> Tensor:
    return Tensor(x.data)


def _finite_check(arr: np.ndarray, op: str):
    if _CHECK_FINITE and not np.all(np.isfinite(arr)):
        raise NumericsError(f"non-finite values produced by op '{op}'")


def _record(op: str, out_data: np.ndarray, parents, bwd) -> Tensor:
    _finite_check(out_data, op)
    out = Tensor(out_data)
    if _TAPE is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        node = _Node(out, tuple(parents), bwd)
        out.node = node
        _TAPE.nodes.append(node)
    return out


def _accum(t: Tensor, g: np.ndarray, pending: dict):
    if not t.requires_grad:
        return
    if t.node is None:
        t.grad = g.copy() if t.grad is None else t.grad + g
    else:
        key = id(t.node)
        if key in pending:
            pending[key] = pending[key] + g
        else:
            pending[key] = g


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every requires_grad leaf reachable from ``loss``.

    Repeated calls accumulate; zero grads between steps.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if _TAPE is None or loss.node is None:
        if loss.requires_grad:
            raise ContractError("backward called outside an active tape")
        raise ContractError("loss does not depend on any recorded operation")
    pending: dict[int, np.ndarray] = {id(loss.node): np.ones_like(loss.data)}
    for node in reversed(_TAPE.nodes):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        for p, gp in zip(node.parents, node.bwd(g)):
            if gp is not None:
                _accum(p, gp, pending)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise ops
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(
        "add",
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(
        "sub",
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(
        "mul",
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(
        "div",
        a.data / b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _record("neg", -a.data, (a,), lambda g: (-g,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _record("relu", a.data * mask, (a,), lambda g: (g * mask,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _record("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return _record("log", np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _record("sqrt", out, (a,), lambda g: (g * 0.5 / out,))


def sigmoid(a: Tensor) -> Tensor:
    out = np.where(a.data >= 0, 1.0 / (1.0 + np.exp(-a.data)), np.exp(a.data) / (1.0 + np.exp(a.data)))
    return _record("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    mask = (a.data >= lo) & (a.data <= hi)
    return _record("clip", np.clip(a.data, lo, hi), (a,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# linear algebra / reductions / shape
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ContractError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return _record(
        "matmul",
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).copy(),)

    return _record("sum", a.data.sum(axis=axis, keepdims=keepdims), (a,), bwd)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else a.shape[axis]
    return tsum(a, axis, keepdims) * (1.0 / count)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _record("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _record("concat", np.concatenate([t.data for t in tensors], axis=axis), tensors, bwd)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    sl = [slice(None)] * a.data.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)

    def bwd(g):
        out = np.zeros(a.shape)
        out[sl] = g
        return (out,)

    return _record("narrow", np.ascontiguousarray(a.data[sl]), (a,), bwd)


def take(a: Tensor, index: np.ndarray) -> Tensor:
    """Rows of ``a`` at ``index`` (axis 0); backward scatter-adds."""
    index = np.ascontiguousarray(index, dtype=np.int64)
    n = a.shape[0]

    def bwd(g):
        tail = g.shape[1:]
        flat = g.reshape(g.shape[0], -1) if g.ndim > 1 else g.reshape(-1, 1)
        out = kernels.scatter_add(flat, index, n)
        return (out.reshape((n,) + tail) if g.ndim > 1 else out.reshape(n),)

    return _record("take", a.data[index], (a,), bwd)


def segment_sum(a: Tensor, segments: np.ndarray, n: int) -> Tensor:
    """Sum rows of ``a`` into ``n`` segments; backward gathers."""
    segments = np.ascontiguousarray(segments, dtype=np.int64)
    tail = a.shape[1:]
    flat = a.data.reshape(a.shape[0], -1)
    out = kernels.scatter_add(flat, segments, n).reshape((n,) + tail)
    return _record("segment_sum", out, (a,), lambda g: (g[segments],))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _record("softmax", out, (a,), bwd)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    mu = a.data.mean(axis=-1, keepdims=True)
    var = a.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (a.data - mu) * inv
    out = xhat * gain.data + bias.data

    def bwd(g):
        d = a.shape[-1]
        gx = g * gain.data
        ga = (gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True)) * inv
        axes = tuple(range(a.data.ndim - 1))
        return (ga, (g * xhat).sum(axis=axes), g.sum(axis=axes))

    return _record("layer_norm", out, (a, gain, bias), bwd)


def ste(a: Tensor, values: np.ndarray) -> Tensor:
    """Straight-through: forward yields ``values``, backward passes to ``a``."""
    if values.shape != a.shape:
        raise ContractError(f"ste shape mismatch: {values.shape} vs {a.shape}")
    return _record("ste", values.copy(), (a,), lambda g: (g,))


def segment_softmax(scores: Tensor, segments: np.ndarray, n: int) -> Tensor:
    """Softmax of ``scores`` rows grouped by ``segments`` (max-shifted).

    Every segment in ``range(n)`` must own at least one row.
    """
    segments = np.ascontiguousarray(segments, dtype=np.int64)
    counts = np.bincount(segments, minlength=n)
    if counts.min() < 1:
        raise ContractError("segment_softmax: a segment has no members (missing self-loop?)")
    flat = scores.data.reshape(scores.shape[0], -1)
    m = kernels.segment_max(flat, segments, n).reshape((n,) + scores.shape[1:])
    e = exp(scores - constant(m[segments]))
    total = segment_sum(e, segments, n)
    return e / take(total, segments)
