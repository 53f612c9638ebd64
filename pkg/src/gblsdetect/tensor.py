"""Dense float64 tensors with a reverse-mode gradient tape.

Every operation returns a new :class:`Tensor`; when any input requires a
gradient the result keeps references to its parents plus a closure that maps
the upstream gradient to per-parent gradients.  :meth:`Tensor.backward` walks
the resulting graph in reverse topological order.

Broadcasting is deliberately narrow: operands must have equal shapes, one of
them must be a scalar, the smaller shape must be a suffix of the larger one
(bias rows, per-channel gains), or both have equal rank and differ only where
one side has a singleton axis (``keepdims`` reductions).
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor",
    "Tape",
    "TensorError",
    "ShapeError",
    "NonFiniteError",
    "AutogradError",
    "tensor",
    "no_grad",
    "is_grad_enabled",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "sigmoid",
    "tanh",
    "relu",
    "gelu",
    "exp",
    "log",
    "sin",
    "power",
    "tsum",
    "mean",
    "reshape",
    "transpose",
    "concat",
    "take_rows",
    "gather_last",
    "softmax",
    "log_softmax",
    "layer_norm",
    "batch_norm",
    "BatchNormState",
    "dropout",
    "bce_with_logits",
    "build_tape",
]


class TensorError(Exception):
    """Base class for tensor failures."""


class ShapeError(TensorError, ValueError):
    pass


class NonFiniteError(TensorError, FloatingPointError):
    pass


class AutogradError(TensorError, RuntimeError):
    pass


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values produced by {what}")


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        _check_finite(arr, "tensor creation")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self._op = "leaf"
        self.name = name

    @classmethod
    def _result(cls, data: np.ndarray, parents: tuple["Tensor", ...], backward: BackwardFn, op: str) -> "Tensor":
        _check_finite(data, op)
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        out._op = op
        track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out.requires_grad = track
        if track:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag}, op={self._op})"

    # -- operators ---------------------------------------------------------
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

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    # -- reverse pass --------------------------------------------------------
    def backward(self, grad: np.ndarray | None = None) -> "Tape":
        """Populate ``.grad`` on every leaf that requires a gradient.

        Gradients accumulate into existing ``.grad`` buffers, so callers reset
        them between optimisation steps.
        """
        if not self.requires_grad:
            raise AutogradError("backward() called on a tensor that is not on the tape")
        if grad is None:
            if self.data.size != 1:
                raise AutogradError(f"backward() without a seed gradient needs a scalar, got {self.shape}")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != self.shape:
                raise ShapeError(f"seed gradient shape {grad.shape} != tensor shape {self.shape}")
        tape = build_tape(self)
        pending: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(tape.nodes):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + pg
                else:
                    pending[key] = pg
        return tape


@dataclass
class Tape:
    """Recorded operations in topological order (parents before children)."""

    nodes: list[Tensor] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.nodes)


def build_tape(root: Tensor) -> Tape:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return Tape(order)


def tensor(data, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# broadcasting helpers
# ---------------------------------------------------------------------------


def _broadcast_ok(a: tuple[int, ...], b: tuple[int, ...]) -> bool:
    if a == b or len(a) == 0 or len(b) == 0:
        return True
    if math.prod(a) == 1 or math.prod(b) == 1:
        return True
    if len(a) == len(b):
        # keepdims-style singleton axes
        return all(x == y or x == 1 or y == 1 for x, y in zip(a, b))
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)
    return long_[len(long_) - len(short):] == short


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if len(shape) == 0 or math.prod(shape) == 1:
        return np.asarray(grad.sum()).reshape(shape)
    lead = grad.ndim - len(shape)
    if lead > 0:
        grad = grad.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(grad.shape, shape)) if s == 1 and gs != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _binary_shapes(a: Tensor, b: Tensor, op: str) -> None:
    if not _broadcast_ok(a.shape, b.shape):
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b, "add")
    sa, sb = a.shape, b.shape
    return Tensor._result(
        a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add"
    )


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b, "sub")
    sa, sb = a.shape, b.shape
    return Tensor._result(
        a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub"
    )


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b, "mul")
    ad, bd = a.data, b.data
    return Tensor._result(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
        "mul",
    )


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b, "div")
    if np.any(b.data == 0):
        raise NonFiniteError("div: division by zero")
    ad, bd = a.data, b.data
    out = ad / bd
    return Tensor._result(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)),
        "div",
    )


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return Tensor._result(-a.data, (a,), lambda g: (-g,), "neg")


def _unary(a, fwd, dfdx, op: str) -> Tensor:
    a = _as_tensor(a)
    with np.errstate(all="ignore"):
        out = fwd(a.data)
    x = a.data
    return Tensor._result(out, (a,), lambda g: (g * dfdx(x, out),), op)


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    flat = np.asarray(x, dtype=np.float64).reshape(-1)
    out = np.empty_like(flat)
    pos = flat >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-flat[pos]))
    ex = np.exp(flat[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out.reshape(np.shape(x))


def sigmoid(a) -> Tensor:
    return _unary(a, _sigmoid_np, lambda x, y: y * (1.0 - y), "sigmoid")


def tanh(a) -> Tensor:
    return _unary(a, np.tanh, lambda x, y: 1.0 - y * y, "tanh")


def relu(a) -> Tensor:
    return _unary(a, lambda x: np.maximum(x, 0.0), lambda x, y: (x > 0).astype(np.float64), "relu")


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(a) -> Tensor:
    """Exact (erf-based) GELU."""
    return _unary(
        a,
        lambda x: 0.5 * x * (1.0 + erf(x * _INV_SQRT2)),
        lambda x, y: 0.5 * (1.0 + erf(x * _INV_SQRT2)) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x),
        "gelu",
    )


def exp(a) -> Tensor:
    return _unary(a, np.exp, lambda x, y: y, "exp")


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0):
        raise NonFiniteError("log: argument must be strictly positive")
    return _unary(a, np.log, lambda x, y: 1.0 / x, "log")


def sin(a) -> Tensor:
    return _unary(a, np.sin, lambda x, y: np.cos(x), "sin")


def power(a, exponent: float) -> Tensor:
    a = _as_tensor(a)
    p = float(exponent)
    return _unary(a, lambda x: np.power(x, p), lambda x, y: p * np.power(x, p - 1.0), f"pow{p:g}")


# ---------------------------------------------------------------------------
# reductions and shape manipulation
# ---------------------------------------------------------------------------


def _norm_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    shape = a.shape
    kept = tuple(1 if i in axes else s for i, s in enumerate(shape))

    def back(g):
        return (np.broadcast_to(g.reshape(kept), shape).copy(),)

    return Tensor._result(np.asarray(a.data.sum(axis=axes, keepdims=keepdims)), (a,), back, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    count = math.prod(a.shape[i] for i in axes) if axes else 1
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {old} as {shape}") from exc
    return Tensor._result(out, (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a, axes=None) -> Tensor:
    """Permute axes; the default swaps the last two."""
    a = _as_tensor(a)
    if axes is None:
        if a.ndim < 2:
            raise ShapeError("transpose needs at least 2 dims")
        axes = tuple(range(a.ndim - 2)) + (a.ndim - 1, a.ndim - 2)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return Tensor._result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat of nothing")
    ax = axis % ts[0].ndim
    for t in ts[1:]:
        if t.ndim != ts[0].ndim or any(
            s != s0 for i, (s, s0) in enumerate(zip(t.shape, ts[0].shape)) if i != ax
        ):
            raise ShapeError(f"concat: shapes {[t.shape for t in ts]} disagree off axis {ax}")
    bounds = np.cumsum([t.shape[ax] for t in ts])[:-1]

    def back(g):
        return tuple(np.split(g, bounds, axis=ax))

    return Tensor._result(np.concatenate([t.data for t in ts], axis=ax), tuple(ts), back, "concat")


def take_rows(table, ids) -> Tensor:
    """Embedding lookup: ``out[..., :] = table[ids[...], :]``."""
    table = _as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError("take_rows expects a 2-D table")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError("take_rows: id out of range")
    shape = table.shape

    def back(g):
        gt = np.zeros(shape)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, shape[1]))
        return (gt,)

    return Tensor._result(table.data[ids], (table,), back, "take_rows")


def gather_last(x, index) -> Tensor:
    """``out[..., i, j] = x[..., i, index[i, j]]`` for a 2-D integer index."""
    x = _as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    if index.ndim != 2 or x.ndim < 2 or index.shape[0] != x.shape[-2]:
        raise ShapeError(f"gather_last: index {index.shape} incompatible with {x.shape}")
    width = x.shape[-1]
    if index.size and (index.min() < 0 or index.max() >= width):
        raise ShapeError("gather_last: index out of range")
    onehot = np.zeros(index.shape + (width,))
    np.put_along_axis(onehot, index[..., None], 1.0, axis=-1)
    out = np.einsum("...ir,ijr->...ij", x.data, onehot)
    return Tensor._result(out, (x,), lambda g: (np.einsum("...ij,ijr->...ir", g, onehot),), "gather_last")


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes.

    Leading (batch) axes must match, or one operand's leading axes must be a
    suffix of the other's.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    la, lb = a.shape[:-2], b.shape[:-2]
    short, long_ = (la, lb) if len(la) <= len(lb) else (lb, la)
    if long_[len(long_) - len(short):] != short:
        raise ShapeError(f"matmul: batch axes {la} and {lb} do not align")
    ad, bd = a.data, b.data

    def back(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return Tensor._result(ad @ bd, (a, b), back, "matmul")


# ---------------------------------------------------------------------------
# normalisation-style ops
# ---------------------------------------------------------------------------


def softmax(x, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis with max subtraction.

    ``mask`` (broadcastable boolean, True = keep) removes entries entirely:
    they get probability exactly 0 and no gradient.
    """
    x = _as_tensor(x)
    xd = x.data
    if mask is not None:
        keep = np.broadcast_to(np.asarray(mask, dtype=bool), xd.shape)
        if not np.all(keep.any(axis=-1)):
            raise ShapeError("softmax: a row is fully masked")
        z = np.where(keep, xd, -np.inf)
    else:
        z = xd
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    s = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return Tensor._result(s, (x,), back, "softmax")


def log_softmax(x, mask: np.ndarray | None = None) -> Tensor:
    """Log-softmax over the last axis; masked entries are returned as 0."""
    x = _as_tensor(x)
    xd = x.data
    keep = None
    if mask is not None:
        keep = np.broadcast_to(np.asarray(mask, dtype=bool), xd.shape)
        if not np.all(keep.any(axis=-1)):
            raise ShapeError("log_softmax: a row is fully masked")
        z = np.where(keep, xd, -np.inf)
    else:
        z = xd
    m = z.max(axis=-1, keepdims=True)
    lse = m + np.log(np.exp(z - m).sum(axis=-1, keepdims=True))
    out = xd - lse
    s = np.exp(z - lse)
    if keep is not None:
        out = np.where(keep, out, 0.0)

    def back(g):
        if keep is not None:
            g = np.where(keep, g, 0.0)
        return (g - s * g.sum(axis=-1, keepdims=True),)

    return Tensor._result(out, (x,), back, "log_softmax")


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalise each row (last axis) to zero mean, unit variance, then scale and shift."""
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: gain/bias must have shape ({d},)")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    gd = gain.data

    def back(g):
        dxhat = g * gd
        dx = inv / d * (d * dxhat - dxhat.sum(axis=-1, keepdims=True) - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor._result(xhat * gd + bias.data, (x, gain, bias), back, "layer_norm")


@dataclass
class BatchNormState:
    """Running statistics carried between batch-norm calls."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def fresh(cls, dim: int, momentum: float = 0.1, eps: float = 1e-5) -> "BatchNormState":
        return cls(np.zeros(dim), np.ones(dim), momentum, eps)


def batch_norm(x, gain, bias, state: BatchNormState, training: bool) -> Tensor:
    """Batch normalisation over axis 0 of a ``batch x d`` tensor.

    Training mode normalises with biased batch statistics and updates the
    running averages (unbiased variance); eval mode uses the running averages.
    """
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    if x.ndim != 2:
        raise ShapeError("batch_norm expects a 2-D batch x d tensor")
    n, d = x.shape
    gd = gain.data
    if training:
        if n < 2:
            raise ShapeError("batch_norm in train mode needs a batch of at least 2")
        xd = x.data
        mu = xd.mean(axis=0)
        xc = xd - mu
        var = (xc * xc).mean(axis=0)
        inv = 1.0 / np.sqrt(var + state.eps)
        xhat = xc * inv
        m = state.momentum
        state.running_mean = (1.0 - m) * state.running_mean + m * mu
        state.running_var = (1.0 - m) * state.running_var + m * var * n / (n - 1)

        def back(g):
            dxhat = g * gd
            dx = inv / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
            return dx, (g * xhat).sum(axis=0), g.sum(axis=0)

    else:
        inv = 1.0 / np.sqrt(state.running_var + state.eps)
        xhat = (x.data - state.running_mean) * inv

        def back(g):
            return g * gd * inv, (g * xhat).sum(axis=0), g.sum(axis=0)

    return Tensor._result(xhat * gd + bias.data, (x, gain, bias), back, "batch_norm")


def dropout(x, p: float, rng: np.random.Generator | int | None = None, training: bool = True) -> Tensor:
    """Inverted dropout: survivors are rescaled by ``1/(1-p)``; eval mode is identity."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    x = _as_tensor(x)
    if not training or p == 0.0:
        return x
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    keep = (gen.random(x.shape) >= p) / (1.0 - p)
    return Tensor._result(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def bce_with_logits(logits, targets) -> Tensor:
    """Mean binary cross-entropy computed directly from logits."""
    z = _as_tensor(logits)
    y = np.asarray(targets.data if isinstance(targets, Tensor) else targets, dtype=np.float64)
    if y.shape != z.shape:
        y = y.reshape(z.shape)
    zd = z.data
    losses = np.maximum(zd, 0.0) - zd * y + np.log1p(np.exp(-np.abs(zd)))
    n = zd.size
    p = _sigmoid_np(zd)
    return Tensor._result(np.asarray(losses.mean()), (z,), lambda g: (g * (p - y) / n,), "bce")
