"""A small reverse-mode automatic differentiation engine over numpy arrays.

Every operation returns a new :class:`Tensor` that remembers its parents and
a backward rule mapping the output cotangent to parent cotangents. Gradients
are accumulated in a dictionary local to each :func:`grad` call, so graphs can
be differentiated repeatedly and tensors carry no mutable gradient state.

Complex spectrograms are carried as real tensors whose last axis has size 2
(real, imaginary).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import stft as _stft

Backward = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tensor:
    __slots__ = ("value", "parents", "backward", "requires_grad", "op")

    def __init__(self, value, parents: tuple["Tensor", ...] = (), backward: Backward | None = None,
                 requires_grad: bool = False, op: str = "leaf"):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape})"

    def numpy(self) -> np.ndarray:
        return self.value

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)


def leaf(value, requires_grad: bool = True) -> Tensor:
    return Tensor(np.array(value, dtype=np.float64), requires_grad=requires_grad)


def constant(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(*shapes) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(*shapes)
    except ValueError as exc:
        raise ValueError(f"shapes {shapes} are not broadcast-compatible") from exc


# -- elementwise ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    _check_broadcast(a.shape, b.shape)
    return Tensor(a.value + b.value, (a, b),
                  lambda g: (_unbroadcast(g, a.shape) if a.requires_grad else None,
                             _unbroadcast(g, b.shape) if b.requires_grad else None), op="add")


def sub(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    _check_broadcast(a.shape, b.shape)
    return Tensor(a.value - b.value, (a, b),
                  lambda g: (_unbroadcast(g, a.shape) if a.requires_grad else None,
                             -_unbroadcast(g, b.shape) if b.requires_grad else None), op="sub")


def mul(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    _check_broadcast(a.shape, b.shape)
    # constants get no cotangent; this matters for large broadcast products
    return Tensor(a.value * b.value, (a, b),
                  lambda g: (_unbroadcast(g * b.value, a.shape) if a.requires_grad else None,
                             _unbroadcast(g * a.value, b.shape) if b.requires_grad else None), op="mul")


def square(a) -> Tensor:
    a = constant(a)
    return Tensor(a.value ** 2, (a,), lambda g: (2.0 * a.value * g,), op="square")


def sigmoid(a) -> Tensor:
    a = constant(a)
    # split by sign to avoid overflow in exp
    x = a.value
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return Tensor(out, (a,), lambda g: (g * out * (1.0 - out),), op="sigmoid")


def tanh(a) -> Tensor:
    a = constant(a)
    out = np.tanh(a.value)
    return Tensor(out, (a,), lambda g: (g * (1.0 - out ** 2),), op="tanh")


def relu(a) -> Tensor:
    a = constant(a)
    on = a.value > 0
    return Tensor(np.where(on, a.value, 0.0), (a,), lambda g: (g * on,), op="relu")


# -- linear algebra and reductions ----------------------------------------------

def matmul(a, b) -> Tensor:
    """``numpy.matmul`` for operands with at least two dimensions."""
    a, b = constant(a), constant(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands need at least two dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    _check_broadcast(a.shape[:-2], b.shape[:-2])

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(b.value, -1, -2), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(a.value, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor(a.value @ b.value, (a, b), backward, op="matmul")


def apply_matrix(a, M) -> Tensor:
    """Right-multiply the last axis of ``a`` by a constant (dense or scipy.sparse) matrix."""
    a = constant(a)
    if a.shape[-1] != M.shape[0]:
        raise ValueError(f"cannot apply a {M.shape} matrix to last axis of {a.shape}")
    lead = a.shape[:-1]
    flat = a.value.reshape(-1, a.shape[-1])
    out = np.asarray(flat @ M).reshape(lead + (M.shape[1],))
    MT = M.T

    def backward(g):
        return (np.asarray(g.reshape(-1, M.shape[1]) @ MT).reshape(a.shape),)

    return Tensor(out, (a,), backward, op="apply_matrix")


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = constant(a)
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor(out, (a,), backward, op="sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = constant(a)
    count = a.value.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return mul(tsum(a, axis, keepdims), 1.0 / count)


# -- shape manipulation ---------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = constant(a)
    return Tensor(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), op="reshape")


def transpose(a, axes=None) -> Tensor:
    a = constant(a)
    inverse = None if axes is None else np.argsort(axes)
    return Tensor(np.transpose(a.value, axes), (a,), lambda g: (np.transpose(g, inverse),), op="transpose")


def broadcast_to(a, shape) -> Tensor:
    a = constant(a)
    _check_broadcast(a.shape, shape)
    return Tensor(np.broadcast_to(a.value, shape).copy(), (a,), lambda g: (_unbroadcast(g, a.shape),),
                  op="broadcast")


def getitem(a, index) -> Tensor:
    a = constant(a)

    def backward(g):
        out = np.zeros(a.shape)
        np.add.at(out, index, g)
        return (out,)

    return Tensor(a.value[index], (a,), backward, op="slice")


def masked_select(a, mask) -> Tensor:
    """1-D tensor of the entries of ``a`` where ``mask`` is true."""
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    return getitem(a, mask)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [constant(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(np.concatenate([t.value for t in tensors], axis=axis), tuple(tensors), backward, op="concat")


# -- spectral transforms ----------------------------------------------------------

def stft(x, cfg: _stft.StftConfig) -> Tensor:
    """``(..., T)`` -> ``(..., frames, bins, 2)`` with (real, imag) in the last axis."""
    x = constant(x)
    length = x.shape[-1]
    S = _stft.stft_array(x.value, cfg)

    def backward(g):
        return (_stft.stft_adjoint(g[..., 0] + 1j * g[..., 1], cfg, length),)

    return Tensor(np.stack([S.real, S.imag], axis=-1), (x,), backward, op="stft")


def istft(S, cfg: _stft.StftConfig, length: int) -> Tensor:
    """``(..., frames, bins, 2)`` -> ``(..., length)`` weighted overlap-add."""
    S = constant(S)
    if S.shape[-1] != 2:
        raise ValueError("istft expects a trailing (real, imag) axis")
    out = _stft.istft_array(S.value[..., 0] + 1j * S.value[..., 1], cfg, length)

    def backward(g):
        G = _stft.istft_adjoint(g, cfg)
        return (np.stack([G.real, G.imag], axis=-1),)

    return Tensor(out, (S,), backward, op="istft")


# -- differentiation --------------------------------------------------------------

def topological_order(root: Tensor) -> list[Tensor]:
    """Tracked nodes reachable from ``root``, parents before children."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def grad(loss: Tensor, leaves: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradients of a scalar ``loss`` with respect to ``leaves``.

    Leaves the loss does not depend on get zero gradients.
    """
    if loss.value.size != 1:
        raise ValueError("grad needs a scalar loss")
    cotangent: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    for node in reversed(topological_order(loss)):
        g = cotangent.pop(id(node), None) if node.parents else cotangent.get(id(node))
        if g is None or node.backward is None:
            continue
        for parent, pg in zip(node.parents, node.backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            cotangent[key] = cotangent[key] + pg if key in cotangent else pg
    return [np.array(cotangent.get(id(t), np.zeros(t.shape)), dtype=np.float64).reshape(t.shape)
            for t in leaves]


def numerical_grad(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central finite differences of a scalar function of an array."""
    x = np.array(x, dtype=np.float64, order="C")  # reshape below must be a view
    out = np.zeros_like(x)
    flat = x.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        out.reshape(-1)[i] = (fp - fm) / (2 * h)
    return out
