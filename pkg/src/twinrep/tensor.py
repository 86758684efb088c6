"""Dense float64 tensors with a reverse-mode gradient tape.

Every differentiable op builds a node that remembers its parents and a
closure computing the vector-Jacobian product. ``Tensor.backward`` replays
the graph in reverse topological order, accumulating into ``.grad``.

Broadcasting is deliberately limited: two tensors combine only when their
shapes match exactly or when the right operand is a bias vector matching
the left operand's last axis. Plain numpy arrays and Python scalars act as
constants and may broadcast freely (they never receive gradients).
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor",
    "ShapeError",
    "LabelError",
    "NumericError",
    "no_grad",
    "matmul",
    "batched_matmul",
    "softmax",
    "layer_norm",
    "cross_entropy",
    "gelu",
    "dropout",
    "embedding",
    "concat",
    "grad_check",
]

DTYPE = np.float64

_grad_enabled = True


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class LabelError(ValueError):
    """Raised when a class label falls outside the logits' class range."""


class NumericError(ArithmeticError):
    """Raised when an op receives non-finite input it cannot handle."""


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference mode)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    """A node in the computation graph.

    Attributes:
        data: float64 ndarray holding the values.
        grad: accumulated gradient of the same shape, or None before backward.
        requires_grad: whether gradients flow into this tensor.
        name: optional label used in diagnostics and checkpoints.
    """

    __array_priority__ = 1000  # keep numpy from hijacking reflected ops

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: str | None = None,
        _parents: tuple["Tensor", ...] = (),
        _backward: Callable[[np.ndarray], None] | None = None,
        _op: str = "",
    ):
        self.data = np.array(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents = _parents
        self._backward = _backward
        self._op = _op

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

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.shape[0]

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    # -- graph machinery --------------------------------------------------

    @staticmethod
    def _make(data: np.ndarray, parents: tuple["Tensor", ...], backward, op: str) -> "Tensor":
        # op outputs are fresh (or read-only views), so skip the defensive copy in __init__
        out = Tensor.__new__(Tensor)
        out.data = np.asarray(data, dtype=DTYPE)
        out.grad = None
        out.name = None
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad, out._parents, out._backward, out._op = True, parents, backward, op
        else:
            out.requires_grad, out._parents, out._backward, out._op = False, (), None, ""
        return out

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if g.shape != self.data.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match tensor shape {self.shape}")
        if self.grad is None:
            self.grad = np.array(g, dtype=DTYPE, copy=True)
        else:
            self.grad += g

    def backward(self, grad: np.ndarray | float | None = None) -> None:
        """Backpropagate from this tensor.

        Gradients accumulate into every reachable ``requires_grad`` tensor;
        callers zero parameter grads between steps. Intermediate nodes keep
        their grads only for the duration of the pass.
        """
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a seed gradient needs a scalar tensor")
            seed = np.ones_like(self.data)
        else:
            seed = np.broadcast_to(np.asarray(grad, dtype=DTYPE), self.shape).copy()

        order = topological_order(self)
        pending: dict[int, np.ndarray] = {id(self): seed}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            for parent, pg in node._backward(g):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + pg
                else:
                    pending[key] = pg

    # -- operators --------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        return add(self, -other if not isinstance(other, Tensor) else neg(other))

    def __rsub__(self, other) -> "Tensor":
        return add(neg(self), other)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __mul__(self, other) -> "Tensor":
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / np.asarray(other, dtype=DTYPE))

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, index) -> "Tensor":
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None) -> "Tensor":
        n = self.size if axis is None else self.shape[axis]
        return tsum(self, axis=axis) * (1.0 / n)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        return transpose(self, axes or None)

    def abs(self) -> "Tensor":
        return tabs(self)

    def max(self, axis: int) -> "Tensor":
        return tmax(self, axis)


def topological_order(root: Tensor) -> list[Tensor]:
    """Return graph nodes reachable from ``root`` with parents before children."""
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
        for parent in node._parents:
            if id(parent) not in seen and parent.requires_grad:
                stack.append((parent, False))
    return order


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(x: np.ndarray, op: str) -> None:
    if not np.isfinite(x).all():
        raise NumericError(f"{op}: non-finite input")


# -- elementwise -----------------------------------------------------------


def add(a: Tensor, b) -> Tensor:
    """a + b. ``b`` may be a same-shape tensor, a last-axis bias tensor, or a constant."""
    if isinstance(b, Tensor):
        if b.shape == a.shape:
            out = a.data + b.data

            def backward(g):
                return ((a, g), (b, g))

        elif b.ndim == 1 and a.ndim >= 1 and b.shape[0] == a.shape[-1]:
            out = a.data + b.data
            axes = tuple(range(a.ndim - 1))

            def backward(g):
                return ((a, g), (b, g.sum(axis=axes)))

        else:
            raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")
        return Tensor._make(out, (a, b), backward, "add")
    const = np.asarray(b, dtype=DTYPE)
    out = a.data + const
    if out.shape != a.shape:
        raise ShapeError(f"add: constant of shape {const.shape} would broadcast {a.shape}")
    return Tensor._make(out, (a,), lambda g: ((a, g),), "add_const")


def neg(a: Tensor) -> Tensor:
    return Tensor._make(-a.data, (a,), lambda g: ((a, -g),), "neg")


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product; tensor operands must share a shape."""
    if isinstance(b, Tensor):
        if a.shape != b.shape:
            raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")
        out = a.data * b.data
        return Tensor._make(out, (a, b), lambda g: ((a, g * b.data), (b, g * a.data)), "mul")
    const = np.asarray(b, dtype=DTYPE)
    out = a.data * const
    if out.shape != a.shape:
        # constant broadcast into a larger result: reduce the gradient back
        def backward(g):
            ga = g * const
            extra = tuple(range(ga.ndim - a.ndim))
            if extra:
                ga = ga.sum(axis=extra)
            keep = tuple(i for i, n in enumerate(a.shape) if n == 1 and ga.shape[i] != 1)
            if keep:
                ga = ga.sum(axis=keep, keepdims=True)
            return ((a, ga),)

        return Tensor._make(out, (a,), backward, "mul_const")
    return Tensor._make(out, (a,), lambda g: ((a, g * const),), "mul_const")


def tabs(a: Tensor) -> Tensor:
    sign = np.sign(a.data)
    return Tensor._make(np.abs(a.data), (a,), lambda g: ((a, g * sign),), "abs")


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(a: Tensor) -> Tensor:
    """Exact GELU: x * Phi(x)."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out = x * cdf

    def backward(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
        return ((a, g * (cdf + x * pdf)),)

    return Tensor._make(out, (a,), backward, "gelu")


def dropout(a: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout. Identity when not training or rate == 0."""
    if not training or rate == 0.0:
        return a
    if rng is None:
        raise ValueError("dropout in training mode needs an explicit rng")
    keep = (rng.random(a.shape) >= rate).astype(DTYPE) / (1.0 - rate)
    return Tensor._make(a.data * keep, (a,), lambda g: ((a, g * keep),), "dropout")


# -- reductions and shape ops ---------------------------------------------


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return ((a, np.broadcast_to(g, a.shape).copy()),)

    return Tensor._make(out, (a,), backward, "sum")


def tmax(a: Tensor, axis: int) -> Tensor:
    """Max along ``axis``; the gradient goes to the first maximal entry."""
    idx = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def backward(g):
        ga = np.zeros_like(a.data)
        np.put_along_axis(ga, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        return ((a, ga),)

    return Tensor._make(out, (a,), backward, "max")


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    out = a.data.reshape(shape)
    return Tensor._make(out, (a,), lambda g: ((a, g.reshape(a.shape)),), "reshape")


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    axes = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    out = a.data.transpose(axes)
    return Tensor._make(out, (a,), lambda g: ((a, g.transpose(inverse)),), "transpose")


def regroup(a: Tensor, pre_shape: Sequence[int], axes: Sequence[int], post_shape: Sequence[int]) -> Tensor:
    """``a.reshape(pre_shape).transpose(axes).reshape(post_shape)`` as a single graph node."""
    axes = tuple(axes)
    moved = a.data.reshape(pre_shape).transpose(axes)
    moved_shape = moved.shape
    out = moved.reshape(post_shape)

    def backward(g):
        inverse = tuple(np.argsort(axes))
        return ((a, g.reshape(moved_shape).transpose(inverse).reshape(a.shape)),)

    return Tensor._make(out, (a,), backward, "regroup")


def getitem(a: Tensor, index) -> Tensor:
    out = a.data[index]

    def backward(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, index, g)
        return ((a, ga),)

    return Tensor._make(np.array(out), (a,), backward, "getitem")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        return tuple(
            (t, np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis))
            for i, t in enumerate(tensors)
        )

    return Tensor._make(out, tuple(tensors), backward, "concat")


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of ``table`` at integer ``ids`` (any shape); scatter-add backward."""
    ids = np.asarray(ids, dtype=np.int64)
    out = table.data[ids]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return ((table, gt),)

    return Tensor._make(out, (table,), backward, "embedding")


# -- linear algebra -------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of an m x k and a k x n tensor."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    out = a.data @ b.data

    def backward(g):
        return ((a, g @ b.data.T), (b, a.data.T @ g))

    return Tensor._make(out, (a, b), backward, "matmul")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map ``x @ w + b`` of an m x k input by a k x n weight and length-n bias."""
    xs, ws = x.data.shape, w.data.shape
    if len(xs) != 2 or len(ws) != 2 or xs[1] != ws[0]:
        raise ShapeError(f"linear: cannot multiply shapes {xs} and {ws}")
    if b is not None and b.data.shape != (ws[1],):
        raise ShapeError(f"linear: bias shape {b.shape} does not match output width {w.shape[1]}")
    out = x.data @ w.data
    if b is not None:
        out += b.data

    def backward(g):
        grads = [(x, g @ w.data.T), (w, x.data.T @ g)]
        if b is not None:
            grads.append((b, g.sum(axis=0)))
        return tuple(grads)

    parents = (x, w) if b is None else (x, w, b)
    return Tensor._make(out, parents, backward, "linear")


def batched_matmul(a: Tensor, b: Tensor, transpose_b: bool = False) -> Tensor:
    """Batched product of n x m x k and n x k x p tensors.

    With ``transpose_b`` the second operand is given as n x p x k and used
    transposed, which saves a separate transpose node for attention scores.
    """
    ad, bd = a.data, b.data
    bk = 2 if transpose_b else 1
    if ad.ndim != 3 or bd.ndim != 3 or ad.shape[0] != bd.shape[0] or ad.shape[2] != bd.shape[bk]:
        raise ShapeError(f"batched_matmul: cannot multiply shapes {ad.shape} and {bd.shape}"
                         + (" (second transposed)" if transpose_b else ""))
    bt = bd.transpose(0, 2, 1) if transpose_b else bd
    out = np.matmul(ad, bt)

    def backward(g):
        ga = np.matmul(g, bt.transpose(0, 2, 1))
        gb = np.matmul(ad.transpose(0, 2, 1), g)
        return ((a, ga), (b, gb.transpose(0, 2, 1) if transpose_b else gb))

    return Tensor._make(out, (a, b), backward, "bmm")


# -- normalisation and probabilities --------------------------------------


def softmax(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis.

    Args:
        x: logits; must be finite.
        mask: optional boolean array broadcastable to ``x``; False entries
            are treated as -inf logits and receive exactly zero probability.
            Every row needs at least one True entry.
    """
    _check_finite(x.data, "softmax")
    z = x.data
    if mask is not None:
        z = np.where(np.asarray(mask, dtype=bool), z, -np.inf)
        if z.shape != x.shape:
            raise ShapeError(f"softmax: mask would broadcast logits {x.shape} to {z.shape}")
    e = np.exp(z - np.maximum.reduce(z, axis=-1, keepdims=True))
    y = e / np.add.reduce(e, axis=-1, keepdims=True)

    def backward(g):
        return ((x, y * (g - np.add.reduce(g * y, axis=-1, keepdims=True))),)

    return Tensor._make(y, (x,), backward, "softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalise the last axis to zero mean and unit variance, then scale and shift."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: gain/bias {gain.shape}/{bias.shape} vs last axis {d}")
    xd = x.data
    xc = xd - np.add.reduce(xd, axis=-1, keepdims=True) / d
    inv = 1.0 / np.sqrt(np.add.reduce(xc * xc, axis=-1, keepdims=True) / d + eps)
    xhat = xc * inv
    out = xhat * gain.data
    out += bias.data

    def backward(g):
        axes = tuple(range(xd.ndim - 1))
        gx_hat = g * gain.data
        gx = inv * (
            gx_hat
            - gx_hat.mean(axis=-1, keepdims=True)
            - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True)
        )
        return ((x, gx), (gain, (g * xhat).sum(axis=axes)), (bias, g.sum(axis=axes)))

    return Tensor._make(out, (x, gain, bias), backward, "layer_norm")


def cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean negative log-likelihood over a batch of logits, via log-sum-exp."""
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy: logits must be 2-D, got {logits.shape}")
    b, c = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (b,):
        raise ShapeError(f"cross_entropy: {labels.shape[0]} labels for batch of {b}")
    bad = np.flatnonzero((labels < 0) | (labels >= c))
    if bad.size:
        i = int(bad[0])
        raise LabelError(f"label {int(labels[i])} at index {i} outside [0, {c})")
    _check_finite(logits.data, "cross_entropy")
    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    rows = np.arange(b)
    loss = np.mean(lse - z[rows, labels])

    def backward(g):
        p = np.exp(z - lse[:, None])
        p[rows, labels] -= 1.0
        return ((logits, g * p / b),)

    return Tensor._make(np.array(loss), (logits,), backward, "cross_entropy")


# -- verification ---------------------------------------------------------


def grad_check(
    f: Callable[[], Tensor],
    params: Iterable[Tensor],
    h: float = 1e-5,
) -> float:
    """Compare tape gradients of a scalar function against central differences.

    ``f`` is called with no arguments and must read the current values of
    ``params``. Every entry of every parameter is perturbed in turn.

    Returns:
        max over entries of |analytic - numeric| / max(1, |analytic|, |numeric|).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    params = list(params)
    for p in params:
        p.zero_grad()
    loss = f()
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    for p in params:
        p.zero_grad()

    worst = 0.0
    with no_grad():
        for p, ga in zip(params, analytic):
            flat = p.data.reshape(-1)
            gflat = ga.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = f().item()
                flat[i] = orig - h
                down = f().item()
                flat[i] = orig
                numeric = (up - down) / (2.0 * h)
                err = abs(gflat[i] - numeric) / max(1.0, abs(gflat[i]), abs(numeric))
                worst = max(worst, err)
    return worst
