"""Dense float tensors with reverse-mode differentiation on a global tape.

The operator set is exactly what the mimicry-intensity models need: matmul,
broadcasted elementwise arithmetic, reductions, layer_norm, gelu,
masked_softmax, inverted dropout, concat and reshape.

A single logical thread owns the tape: every op that touches a tensor with
``requires_grad`` appends one record, and :func:`backward` replays the records
in reverse registration order, accumulates ``grad`` buffers, and clears the
tape. Tensors are treated as immutable once written by an op.

Training runs at float32; the finite-difference harness builds float64
tensors through the same ops, where central differences are not
noise-dominated.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf as _erf

from .errors import ConfigError, DegenerateMaskError, ShapeError, TapeError

_FLOAT_DTYPES = (np.float32, np.float64)
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Tensor:
    """Row-major float array plus an optional same-shape gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- convenience arithmetic (lifts plain numbers to constants) --

    def __add__(self, other):
        return add(self, _lift(other, self.dtype))

    def __radd__(self, other):
        return add(_lift(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _lift(other, self.dtype))

    def __rsub__(self, other):
        return sub(_lift(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _lift(other, self.dtype))

    def __rmul__(self, other):
        return mul(_lift(other, self.dtype), self)

    def __truediv__(self, other):
        return div(self, _lift(other, self.dtype))

    def __rtruediv__(self, other):
        return div(_lift(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _lift(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


# ---------------------------------------------------------------------------
# tape
# ---------------------------------------------------------------------------

# Each record: (output, inputs, backward_rule). The rule maps the output
# gradient to one gradient array (or None) per input.
_TAPE: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Run forward ops without recording them (eval-mode inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def tape_size() -> int:
    return len(_TAPE)


def clear_tape() -> None:
    _TAPE.clear()


def _record(out: Tensor, inputs: tuple[Tensor, ...], rule: Callable) -> Tensor:
    if _GRAD_ENABLED and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _TAPE.append((out, inputs, rule))
    return out


def backward(loss: Tensor) -> None:
    """Populate ``grad`` for every requires_grad tensor reachable from loss.

    The tape is consumed: a second call without a fresh forward pass raises.
    """
    if loss.size != 1:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not _TAPE:
        raise TapeError("backward called on an empty tape (re-run the forward pass)")
    loss.grad = np.ones_like(loss.data)
    try:
        for out, inputs, rule in reversed(_TAPE):
            if out.grad is None:
                continue
            grads = rule(out.grad)
            for tensor, g in zip(inputs, grads):
                if g is not None and tensor.requires_grad:
                    tensor._accumulate(g)
    finally:
        _TAPE.clear()


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)

    def rule(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(out, (a, b), rule)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data)

    def rule(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(out, (a, b), rule)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)

    def rule(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record(out, (a, b), rule)


def div(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data / b.data)

    def rule(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _record(out, (a, b), rule)


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)
    return _record(out, (a,), lambda g: (-g,))


# ---------------------------------------------------------------------------
# linear algebra and shape ops
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data)

    def rule(g):
        return g @ b.data.T, a.data.T @ g

    return _record(out, (a, b), rule)


def reshape(a: Tensor, shape: tuple) -> Tensor:
    out = Tensor(a.data.reshape(shape))

    def rule(g):
        return (g.reshape(a.shape),)

    return _record(out, (a,), rule)


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not xs:
        raise ShapeError("concat of an empty tensor list")
    ref = xs[0]
    ax = axis % max(ref.ndim, 1)
    for x in xs[1:]:
        if x.ndim != ref.ndim:
            raise ShapeError(f"concat rank mismatch: {ref.shape} vs {x.shape}")
        for d in range(ref.ndim):
            if d != ax and x.shape[d] != ref.shape[d]:
                raise ShapeError(f"concat shape mismatch on axis {d}: {ref.shape} vs {x.shape}")
    out = Tensor(np.concatenate([x.data for x in xs], axis=ax))
    sizes = [x.shape[ax] for x in xs]
    offsets = np.cumsum(sizes)[:-1]

    def rule(g):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, offsets, axis=ax))

    return _record(out, tuple(xs), rule)


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def rule(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=True),)

    return _record(out, (a,), rule)


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(a.data.mean(axis=axis, keepdims=keepdims))
    count = a.size if axis is None else a.shape[axis]

    def rule(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=True) / count,)

    return _record(out, (a,), rule)


# ---------------------------------------------------------------------------
# nonlinearities and normalization
# ---------------------------------------------------------------------------


def gelu(a: Tensor) -> Tensor:
    """Exact Gaussian-CDF gelu, x * Phi(x), with erf rather than tanh."""
    x = a.data
    phi = 0.5 * (1.0 + _erf(x * _INV_SQRT2))
    out = Tensor(x * phi)

    def rule(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
        return (g * (phi + x * pdf),)

    return _record(out, (a,), rule)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Standardize the last axis with biased variance, then apply gain/bias."""
    d = x.shape[-1] if x.ndim else 0
    if d < 1:
        raise ShapeError(f"layer_norm needs a non-empty last axis, got shape {x.shape}")
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"layer_norm gain/bias must have shape ({d},), got {gain.shape} and {bias.shape}"
        )
    if eps <= 0:
        raise ConfigError(f"layer_norm eps must be positive, got {eps}")
    mean = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv_std
    out = Tensor(gain.data * xhat + bias.data)

    def rule(g):
        lead = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=lead) if lead else (g * xhat)
        dbias = g.sum(axis=lead) if lead else g
        dxhat = g * gain.data
        dx = inv_std * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx.astype(x.dtype, copy=False), dgain, dbias

    return _record(out, (x, gain, bias), rule)


def masked_softmax(scores: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax over unmasked positions; masked positions get exactly 0.

    Masked entries are excluded from the normalizing sum instead of being
    pushed to a large negative score, so their weight and gradient are exact
    zeros and no overflow is possible.
    """
    mask = np.asarray(mask, dtype=bool)
    if scores.ndim != 1 or mask.shape != scores.shape:
        raise ShapeError(f"masked_softmax needs matching 1-D shapes, got {scores.shape} and {mask.shape}")
    if not mask.any():
        raise DegenerateMaskError("masked_softmax over an all-masked sequence")
    s = scores.data[mask]
    z = np.exp(s - s.max())
    w = z / z.sum()
    out_data = np.zeros_like(scores.data)
    out_data[mask] = w
    out = Tensor(out_data)

    def rule(g):
        gm = g[mask]
        ds = np.zeros_like(scores.data)
        ds[mask] = w * (gm - float(np.dot(gm, w)))
        return (ds,)

    return _record(out, (scores,), rule)


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ConfigError("training-mode dropout requires an rng stream")
    keep = (rng.random(x.shape) >= p).astype(x.dtype)
    scale = np.asarray(1.0 / (1.0 - p), dtype=x.dtype)
    out = Tensor(x.data * keep * scale)

    def rule(g):
        return (g * keep * scale,)

    return _record(out, (x,), rule)


# ---------------------------------------------------------------------------
# small constructors
# ---------------------------------------------------------------------------


def zeros(shape, dtype=np.float32, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def as_row(vec: np.ndarray, dtype=None) -> Tensor:
    """Wrap a 1-D array as a 1 x D constant row tensor."""
    arr = np.asarray(vec, dtype=dtype)
    return Tensor(arr.reshape(1, -1))


def parameters_norm(params: Iterable[Tensor]) -> float:
    total = 0.0
    for p in params:
        total += float(np.sum(p.data.astype(np.float64) ** 2))
    return math.sqrt(total)
