"""Minimal reverse-mode automatic differentiation over numpy arrays.

A ``Tensor`` wraps a float64 ndarray and remembers the operation that
produced it; ``backward`` walks the tape in reverse topological order
and accumulates vector-Jacobian products into ``grad``.  Only the
primitives needed by the denoiser are implemented, each with an exact
closed-form adjoint.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """Node in the computation tape."""

    __slots__ = ("data", "grad", "_parents", "_vjp")

    def __init__(self, data, parents=(), vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = tuple(parents)
        self._vjp = vjp

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    # small amount of operator sugar, used by loss construction and tests
    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return shift(self, float(other))

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return shift(self, -float(other))

    def __rsub__(self, other):
        return shift(scale(self, -1.0), float(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __truediv__(self, other):
        return scale(self, 1.0 / float(other))


def constant(data) -> Tensor:
    return Tensor(data)


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(root: Tensor) -> None:
    """Populate ``grad`` on every tensor reachable from a scalar root."""
    if root.data.size != 1:
        raise ValueError("backward needs a scalar root")
    order = _topo_order(root)
    for node in order:
        node.grad = None
    root.grad = np.ones_like(root.data)
    for node in reversed(order):
        if node._vjp is None or node.grad is None:
            continue
        for parent, g in zip(node._parents, node._vjp(node.grad)):
            if g is None:
                continue
            # accumulation always allocates, so sharing g across parents
            # or holding views is safe: grads are never mutated in place
            parent.grad = g if parent.grad is None else parent.grad + g


# ----------------------------------------------------------------------
# primitives


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape:
        raise ValueError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    return Tensor(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    return Tensor(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")
    return Tensor(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, s: float) -> Tensor:
    return Tensor(a.data * s, (a,), lambda g: (g * s,))


def shift(a: Tensor, c: float) -> Tensor:
    return Tensor(a.data + c, (a,), lambda g: (g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(n, k) @ (k, m)."""
    return Tensor(
        a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g)
    )


def matmul_nt(a: Tensor, b: Tensor) -> Tensor:
    """(n, k) @ (m, k)^T -> (n, m)."""
    return Tensor(
        a.data @ b.data.T, (a, b), lambda g: (g @ b.data, g.T @ a.data)
    )


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a (d,) bias to every row of an (n, d) matrix."""
    return Tensor(x.data + b.data, (x, b), lambda g: (g, g.sum(axis=0)))


def leaky_relu(x: Tensor, slope: float = 0.1) -> Tensor:
    gate = np.where(x.data >= 0.0, 1.0, slope)
    return Tensor(x.data * gate, (x,), lambda g: (g * gate,))


def concat_cols(tensors: list[Tensor]) -> Tensor:
    """Concatenate (n, d_i) matrices along the feature axis."""
    widths = [t.data.shape[1] for t in tensors]
    splits = np.cumsum(widths)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=1))

    return Tensor(np.concatenate([t.data for t in tensors], axis=1), tuple(tensors), vjp)


def concat_flat(tensors: list[Tensor]) -> Tensor:
    """Concatenate 1-D tensors."""
    sizes = [t.data.size for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits))

    return Tensor(np.concatenate([t.data for t in tensors]), tuple(tensors), vjp)


def take_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Gather along the leading axis; the adjoint scatter-adds."""
    idx = np.asarray(idx, dtype=int)

    def vjp(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return Tensor(x.data[idx], (x,), vjp)


def reshape(x: Tensor, shape) -> Tensor:
    return Tensor(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.data.shape),))


def segment_sum_rows(x: Tensor, n_segments: int) -> Tensor:
    """Sum consecutive equal-size blocks of rows of an (n, d) matrix."""
    n, d = x.data.shape
    if n % n_segments != 0:
        raise ValueError(f"{n} rows do not split into {n_segments} segments")
    size = n // n_segments

    def vjp(g):
        return (np.repeat(g, size, axis=0),)

    return Tensor(x.data.reshape(n_segments, size, d).sum(axis=1), (x,), vjp)


def col_scale(x: Tensor, w: Tensor) -> Tensor:
    """Scale each row of (n, d) by the matching entry of (n,)."""
    if w.data.shape != (x.data.shape[0],):
        raise ValueError("weight vector must have one entry per row")

    def vjp(g):
        return (g * w.data[:, None], (g * x.data).sum(axis=1))

    return Tensor(x.data * w.data[:, None], (x, w), vjp)


def softmax_rows(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return Tensor(y, (x,), vjp)


def max_rows(x: Tensor) -> Tensor:
    """Column-wise maximum over the rows of an (n, d) matrix -> (d,).

    Gradient flows to the first attaining row per column.
    """
    amax = np.argmax(x.data, axis=0)

    def vjp(g):
        gx = np.zeros_like(x.data)
        gx[amax, np.arange(x.data.shape[1])] = g
        return (gx,)

    return Tensor(x.data.max(axis=0), (x,), vjp)


def tile_rows(v: Tensor, n: int) -> Tensor:
    """Repeat a (d,) vector into an (n, d) matrix."""
    return Tensor(np.tile(v.data, (n, 1)), (v,), lambda g: (g.sum(axis=0),))


def sum_all(x: Tensor) -> Tensor:
    return Tensor(
        np.asarray(x.data.sum()),
        (x,),
        lambda g: (np.broadcast_to(g, x.data.shape).copy(),),
    )
