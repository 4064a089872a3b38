"""Minimal dense-tensor math with reverse-mode automatic differentiation.

Tensors are 2-D float64 numpy arrays on a dynamically built tape; scalars
are shaped (1, 1). Ops are plain functions returning new tensors;
``backward(loss)`` runs reverse-mode accumulation into every reachable
``Parameter``. Parameter gradients persist across backward calls until
``zero_grad``; intermediate gradients are transient.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeMismatch(ValueError):
    """Operands have incompatible shapes."""


class NonFiniteInput(ValueError):
    """A NaN or infinity entered the tape."""


class NotScalarLoss(ValueError):
    """backward() was called on a non-(1,1) tensor."""


class Tensor:
    """A 2-D float64 array plus its place in the autodiff tape."""

    __slots__ = ("data", "grad", "requires", "_parents", "_backward")

    def __init__(self, data: np.ndarray, parents: tuple = (),
                 backward: Callable[[np.ndarray], None] | None = None,
                 requires: bool = False):
        self.data = data
        self.grad: np.ndarray | None = None
        self.requires = requires
        self._parents = parents
        self._backward = backward

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires={self.requires})"


class Parameter(Tensor):
    """Named trainable tensor with a persistent gradient buffer."""

    __slots__ = ("name",)

    def __init__(self, name: str, data: np.ndarray):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeMismatch(f"parameter {name!r} must be 2-D, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteInput(f"parameter {name!r} initialized with non-finite values")
        super().__init__(arr, requires=True)
        self.name = name
        self.grad = np.zeros_like(arr)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)


def constant(data) -> Tensor:
    """Wrap raw data as a non-trainable tape leaf."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeMismatch(f"constants must be at most 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput("constant contains NaN or infinity")
    return Tensor(arr)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires:
        return
    t.grad = g.copy() if t.grad is None else t.grad + g


def _node(data: np.ndarray, parents: Sequence[Tensor],
          backward: Callable[[np.ndarray], None]) -> Tensor:
    requires = any(p.requires for p in parents)
    return Tensor(data, tuple(parents), backward if requires else None, requires)


def backward(loss: Tensor) -> None:
    """Populate gradients of every Parameter reachable from ``loss``."""
    if loss.data.shape != (1, 1):
        raise NotScalarLoss(f"loss must be (1, 1), got {loss.data.shape}")
    if not np.isfinite(loss.data[0, 0]):
        raise NonFiniteInput("loss is not finite")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            stack.append((parent, False))
    for node in topo:
        if not isinstance(node, Parameter):
            node.grad = None
    loss.grad = np.ones((1, 1))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ----------------------------------------------------------------- arithmetic

def _reduce_to(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    out = g
    if shape[0] == 1 and g.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    return out


def _broadcastable(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return all(x == y or x == 1 or y == 1 for x, y in zip(a, b))


def add(a: Tensor, b: Tensor) -> Tensor:
    if not _broadcastable(a.shape, b.shape):
        raise ShapeMismatch(f"add {a.shape} vs {b.shape}")
    out_data = a.data + b.data

    def bwd(g):
        _accumulate(a, _reduce_to(g, a.shape))
        _accumulate(b, _reduce_to(g, b.shape))

    return _node(out_data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if not _broadcastable(a.shape, b.shape):
        raise ShapeMismatch(f"mul {a.shape} vs {b.shape}")
    out_data = a.data * b.data

    def bwd(g):
        _accumulate(a, _reduce_to(g * b.data, a.shape))
        _accumulate(b, _reduce_to(g * a.data, b.shape))

    return _node(out_data, (a, b), bwd)


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)

    def bwd(g):
        _accumulate(a, g * factor)

    return _node(a.data * factor, (a,), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def bwd(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _node(out_data, (a, b), bwd)


def transpose(a: Tensor) -> Tensor:
    def bwd(g):
        _accumulate(a, g.T)

    return _node(a.data.T.copy(), (a,), bwd)


# ---------------------------------------------------------------- activations

def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bwd(g):
        _accumulate(a, g * mask)

    return _node(a.data * mask, (a,), bwd)


_GELU_ALPHA = np.sqrt(2.0 / np.pi)
_GELU_BETA = 0.044715


def gelu(a: Tensor) -> Tensor:
    """Tanh-form gaussian error linear unit."""
    x = a.data
    inner = _GELU_ALPHA * (x + _GELU_BETA * x ** 3)
    t = np.tanh(inner)
    out_data = 0.5 * x * (1.0 + t)

    def bwd(g):
        d_inner = _GELU_ALPHA * (1.0 + 3.0 * _GELU_BETA * x ** 2)
        da = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * d_inner
        _accumulate(a, g * da)

    return _node(out_data, (a,), bwd)


def softplus(a: Tensor) -> Tensor:
    x = a.data
    out_data = np.logaddexp(0.0, x)

    def bwd(g):
        _accumulate(a, g / (1.0 + np.exp(-x)))

    return _node(out_data, (a,), bwd)


def softmax_rows(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)

    def bwd(g):
        dot = (g * p).sum(axis=1, keepdims=True)
        _accumulate(a, p * (g - dot))

    return _node(p, (a,), bwd)


def log_softmax_rows(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out_data = shifted - log_z
    p = np.exp(out_data)

    def bwd(g):
        _accumulate(a, g - p * g.sum(axis=1, keepdims=True))

    return _node(out_data, (a,), bwd)


def layer_norm_rows(a: Tensor, gamma: Tensor, beta: Tensor,
                    eps: float = 1e-5) -> Tensor:
    if gamma.shape != (1, a.shape[1]) or beta.shape != (1, a.shape[1]):
        raise ShapeMismatch(
            f"layer_norm affine shapes {gamma.shape}/{beta.shape} vs {a.shape}")
    x = a.data
    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    out_data = xhat * gamma.data + beta.data

    def bwd(g):
        gg = g * gamma.data
        c = a.shape[1]
        term = gg - gg.mean(axis=1, keepdims=True) \
            - xhat * (gg * xhat).sum(axis=1, keepdims=True) / c
        _accumulate(a, term * inv)
        _accumulate(gamma, (g * xhat).sum(axis=0, keepdims=True))
        _accumulate(beta, g.sum(axis=0, keepdims=True))

    return _node(out_data, (a, gamma, beta), bwd)


# -------------------------------------------------------- indexing / reshaping

def embedding_lookup(table: Tensor, ids: Sequence[int]) -> Tensor:
    idx = np.asarray(list(ids), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeMismatch(
            f"embedding id out of range [0, {table.shape[0]})")
    out_data = table.data[idx].copy()

    def bwd(g):
        if not table.requires:
            return
        acc = np.zeros_like(table.data)
        np.add.at(acc, idx, g)
        _accumulate(table, acc)

    return _node(out_data, (table,), bwd)


def gather_rows(a: Tensor, rows: Sequence[int]) -> Tensor:
    return embedding_lookup(a, rows)


def slice_rows(a: Tensor, lo: int, hi: int) -> Tensor:
    def bwd(g):
        if not a.requires:
            return
        acc = np.zeros_like(a.data)
        acc[lo:hi] = g
        _accumulate(a, acc)

    return _node(a.data[lo:hi].copy(), (a,), bwd)


def slice_cols(a: Tensor, lo: int, hi: int) -> Tensor:
    def bwd(g):
        if not a.requires:
            return
        acc = np.zeros_like(a.data)
        acc[:, lo:hi] = g
        _accumulate(a, acc)

    return _node(a.data[:, lo:hi].copy(), (a,), bwd)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    cols = parts[0].shape[1]
    if any(p.shape[1] != cols for p in parts):
        raise ShapeMismatch("concat_rows column mismatch")
    sizes = [p.shape[0] for p in parts]
    out_data = np.concatenate([p.data for p in parts], axis=0)

    def bwd(g):
        offset = 0
        for p, size in zip(parts, sizes):
            _accumulate(p, g[offset:offset + size])
            offset += size

    return _node(out_data, tuple(parts), bwd)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    rows = parts[0].shape[0]
    if any(p.shape[0] != rows for p in parts):
        raise ShapeMismatch("concat_cols row mismatch")
    sizes = [p.shape[1] for p in parts]
    out_data = np.concatenate([p.data for p in parts], axis=1)

    def bwd(g):
        offset = 0
        for p, size in zip(parts, sizes):
            _accumulate(p, g[:, offset:offset + size])
            offset += size

    return _node(out_data, tuple(parts), bwd)


def pick(a: Tensor, cols: Sequence[int]) -> Tensor:
    """out[i, 0] = a[i, cols[i]], one entry per row."""
    idx = np.asarray(list(cols), dtype=np.int64)
    if idx.shape[0] != a.shape[0]:
        raise ShapeMismatch(f"pick needs {a.shape[0]} column indices, got {idx.shape[0]}")
    rows = np.arange(a.shape[0])
    out_data = a.data[rows, idx].reshape(-1, 1).copy()

    def bwd(g):
        if not a.requires:
            return
        acc = np.zeros_like(a.data)
        acc[rows, idx] = g[:, 0]
        _accumulate(a, acc)

    return _node(out_data, (a,), bwd)


# ----------------------------------------------------------------- reductions

def sum_all(a: Tensor) -> Tensor:
    def bwd(g):
        _accumulate(a, np.full_like(a.data, g[0, 0]))

    return _node(np.array([[a.data.sum()]]), (a,), bwd)


def mean_all(a: Tensor) -> Tensor:
    size = a.data.size

    def bwd(g):
        _accumulate(a, np.full_like(a.data, g[0, 0] / size))

    return _node(np.array([[a.data.mean()]]), (a,), bwd)


def mean_rows(a: Tensor) -> Tensor:
    """Column-wise mean over rows -> (1, c)."""
    r = a.shape[0]

    def bwd(g):
        _accumulate(a, np.repeat(g, r, axis=0) / r)

    return _node(a.data.mean(axis=0, keepdims=True), (a,), bwd)


def normalize_rows(a: Tensor, eps: float = 1e-12) -> Tensor:
    """Rows scaled to unit L2 norm (near-zero rows divide by ``eps``)."""
    x = a.data
    raw = np.sqrt((x ** 2).sum(axis=1, keepdims=True))
    clamped = raw < eps
    n = np.where(clamped, eps, raw)
    out_data = x / n

    def bwd(g):
        dot = (g * x).sum(axis=1, keepdims=True)
        direction = np.where(clamped, 0.0, dot / (n ** 3))
        _accumulate(a, g / n - x * direction)

    return _node(out_data, (a,), bwd)


def cosine_similarity(u: Tensor, v: Tensor) -> Tensor:
    """Cosine of two (1, c) vectors as a (1, 1) tensor."""
    if u.shape != v.shape or u.shape[0] != 1:
        raise ShapeMismatch(f"cosine_similarity wants matching (1, c), got {u.shape}/{v.shape}")
    return matmul(normalize_rows(u), transpose(normalize_rows(v)))
