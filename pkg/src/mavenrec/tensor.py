"""Dense float64 tensors with a reverse-mode gradient tape.

Only the operations the recommender needs are provided. Shapes are explicit:
apart from :func:`add_bias` there is no implicit broadcasting, and
:func:`repeat` must be used to replicate a tensor along a new axis.
"""

from __future__ import annotations

import contextlib
import contextvars
import math
from typing import Callable, Iterable, Sequence

import numpy as np

_GRAD_ENABLED = contextvars.ContextVar("mavenrec_grad_enabled", default=True)


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation, inspection)."""
    token = _GRAD_ENABLED.set(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.reset(token)


class Tensor:
    """A float64 array plus an optional gradient buffer and producing node.

    A tensor without ``_parents`` is a leaf. Leaves created with
    ``requires_grad=True`` are trainable and accumulate ``grad`` on
    :meth:`backward`.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "op")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: tuple["Tensor", ...] = (),
        backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None,
        op: str = "leaf",
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward_fn = backward_fn
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def backward(self) -> None:
        backward(self)

    # Operator sugar; every operator maps onto a module-level op.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, key) -> "Tensor":
        return index(self, key)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn, op: str) -> Tensor:
    needs = _GRAD_ENABLED.get() and any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data, op=op)
    return Tensor(data, requires_grad=True, parents=parents, backward_fn=backward_fn, op=op)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def xavier_bound(shape: Sequence[int]) -> float:
    """Uniform bound sqrt(6 / (fan_in + fan_out)); vectors count as [n, 1]."""
    if len(shape) == 1:
        fan = shape[0] + 1
    else:
        fan = shape[-2] + shape[-1]
    return math.sqrt(6.0 / fan)


def param(shape: Sequence[int], init: str = "uniform", seed: int | np.random.Generator | None = None) -> Tensor:
    """Create a trainable leaf.

    ``init`` is ``"zeros"`` or ``"uniform"`` (Xavier uniform). The result is a
    pure function of ``shape``, ``init`` and ``seed``.
    """
    shape = tuple(int(s) for s in shape)
    if not shape or any(s <= 0 for s in shape):
        raise ShapeError(f"parameter shape must be non-empty with positive dimensions, got {list(shape)}")
    if init == "zeros":
        data = np.zeros(shape)
    elif init == "uniform":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        a = xavier_bound(shape)
        data = rng.uniform(-a, a, size=shape)
    else:
        raise ValueError(f"unknown init {init!r}; expected 'zeros' or 'uniform'")
    return Tensor(data, requires_grad=True)


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(leaf) into ``grad`` of every reachable trainable leaf."""
    if root.data.size != 1 or root.data.ndim > 1:
        raise ShapeError(f"backward needs a scalar root (shape [] or [1]), got {list(root.shape)}")
    if not root.requires_grad:
        return

    # iterative post-order DFS for a topological order
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

    grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def _check_same(a: Tensor, b: Tensor, name: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{name}: shapes {list(a.shape)} and {list(b.shape)} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "add")
    return _make(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "sub")
    return _make(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product of equal-shape tensors."""
    _check_same(a, b, "mul")
    return _make(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """x[..., n] + b[n]; the only broadcasting operation."""
    if b.data.ndim != 1 or x.shape[-1:] != b.shape:
        raise ShapeError(f"add_bias: bias {list(b.shape)} does not match last axis of {list(x.shape)}")
    lead = tuple(range(x.data.ndim - 1))
    return _make(x.data + b.data, (x, b), lambda g: (g, g.sum(axis=lead)), "add_bias")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes must match exactly."""
    sa, sb = a.shape, b.shape
    if a.data.ndim < 2 or a.data.ndim != b.data.ndim or sa[:-2] != sb[:-2] or sa[-1] != sb[-2]:
        raise ShapeError(f"matmul: incompatible shapes {list(sa)} and {list(sb)}")

    def bw(g):
        return g @ np.swapaxes(b.data, -1, -2), np.swapaxes(a.data, -1, -2) @ g

    return _make(a.data @ b.data, (a, b), bw, "matmul")


def relu(x: Tensor) -> Tensor:
    # subgradient at exactly 0 is 0
    pos = x.data > 0
    return _make(np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,), "relu")


def square(x: Tensor) -> Tensor:
    return _make(x.data * x.data, (x,), lambda g: (2.0 * x.data * g,), "square")


def sum(x: Tensor) -> Tensor:  # noqa: A001
    return _make(np.array(x.data.sum()), (x,), lambda g: (np.full(x.shape, float(g)),), "sum")


def mean(x: Tensor) -> Tensor:
    n = x.data.size
    return _make(np.array(x.data.mean()), (x,), lambda g: (np.full(x.shape, float(g) / n),), "mean")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    old = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),), "reshape")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose")


def index(x: Tensor, key) -> Tensor:
    """Basic (slice/int) indexing."""
    out = x.data[key]

    def bw(g):
        full = np.zeros_like(x.data)
        full[key] += g
        return (full,)

    return _make(np.array(out), (x,), bw, "index")


def repeat(x: Tensor, n: int, axis: int = 0) -> Tensor:
    """Stack ``n`` copies of ``x`` along a new axis ``axis``."""
    expanded = np.expand_dims(x.data, axis)
    reps = [1] * expanded.ndim
    reps[axis] = n
    return _make(np.tile(expanded, reps), (x,), lambda g: (g.sum(axis=axis),), "repeat")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    nd = tensors[0].data.ndim
    ax = axis % nd
    for t in tensors[1:]:
        if t.data.ndim != nd or t.shape[:ax] + t.shape[ax + 1 :] != tensors[0].shape[:ax] + tensors[0].shape[ax + 1 :]:
            raise ShapeError(f"concat: shapes {[list(t.shape) for t in tensors]} disagree off axis {axis}")
    sizes = [t.shape[ax] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=ax))

    return _make(np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), bw, "concat")


def masked_softmax(logits: Tensor, mask) -> Tensor:
    """Softmax over the last axis restricted to ``mask``; masked entries are exactly 0.

    ``mask`` is a boolean array broadcastable to ``logits``. Each row must
    keep at least one entry.
    """
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), logits.shape)
    if not mask.any(axis=-1).all():
        raise ValueError("masked_softmax: every row needs at least one unmasked entry")
    z = np.where(mask, logits.data, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(z), 0.0)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _make(y, (logits,), bw, "masked_softmax")


def weighted_sum(weights: Tensor, values: Tensor) -> Tensor:
    """sum_j weights[..., j] * values[..., j, :]."""
    if weights.data.ndim + 1 != values.data.ndim or weights.shape != values.shape[:-1]:
        raise ShapeError(f"weighted_sum: weights {list(weights.shape)} vs values {list(values.shape)}")
    out = np.einsum("...j,...jd->...d", weights.data, values.data)

    def bw(g):
        gw = np.einsum("...d,...jd->...j", g, values.data)
        gv = weights.data[..., None] * g[..., None, :]
        return gw, gv

    return _make(out, (weights, values), bw, "weighted_sum")


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Gather rows of a 2-D table; backward scatter-adds into the used rows only."""
    ids = np.asarray(ids, dtype=np.int64)
    if table.data.ndim != 2:
        raise ShapeError(f"embedding_lookup: table must be 2-D, got {list(table.shape)}")
    n = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise IndexError(f"embedding_lookup: ids outside [0, {n})")

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (full,)

    return _make(table.data[ids], (table,), bw, "embedding_lookup")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply per-feature gain and bias."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: gain/bias {list(gain.shape)}/{list(bias.shape)} vs features {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    lead = tuple(range(x.data.ndim - 1))

    def bw(g):
        gx_hat = g * gain.data
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True) - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _make(xhat * gain.data + bias.data, (x, gain, bias), bw, "layer_norm")


def leaves(root: Tensor) -> Iterable[Tensor]:
    """Trainable leaves reachable from ``root`` (debugging aid)."""
    stack, seen = [root], set()
    while stack:
        t = stack.pop()
        if id(t) in seen:
            continue
        seen.add(id(t))
        if t.is_leaf and t.requires_grad:
            yield t
        stack.extend(t._parents)
