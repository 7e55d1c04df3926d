"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Every differentiable quantity in this package is a :class:`Tensor` wrapping an
``np.float64`` ndarray.  Operations record vector-Jacobian products on a tape;
``Tensor.backward()`` walks the tape in reverse topological order.  The engine
is deliberately small: only the operations the models need exist, and all of
them are exercised by the finite-difference suite in ``tests``.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable taping inside the block (evaluation / bank building)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """An ndarray plus the tape edges needed to backpropagate through it."""

    __slots__ = ("data", "grad", "requires_grad", "_parents")

    def __init__(self, data, requires_grad: bool = False, _parents=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._parents: tuple = tuple(_parents) if _GRAD_ENABLED else ()
        self.requires_grad = bool(requires_grad) or any(
            p.requires_grad for p, _ in self._parents
        )
        if not _GRAD_ENABLED:
            self.requires_grad = bool(requires_grad)

    # ------------------------------------------------------------------ basics
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # ---------------------------------------------------------------- backward
    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.data.shape:
            raise ValueError(
                f"seed gradient shape {grad.shape} != tensor shape {self.data.shape}"
            )

        # Iterative DFS; graphs from a training step run to a few hundred nodes
        # but can nest deeper than the default recursion limit.
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                if id(parent) not in visited and parent.requires_grad:
                    stack.append((parent, False))

        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                if node.requires_grad:
                    node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, vjp in node._parents:
                if not parent.requires_grad:
                    continue
                pg = vjp(g)
                if pg.shape != parent.data.shape:
                    raise RuntimeError(
                        f"vjp produced shape {pg.shape} for parent {parent.data.shape}"
                    )
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # --------------------------------------------------------------- operators
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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ------------------------------------------------------------------ elementwise
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(
        a.data + b.data,
        _parents=(
            (a, lambda g: _unbroadcast(g, a.data.shape)),
            (b, lambda g: _unbroadcast(g, b.data.shape)),
        ),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(
        a.data - b.data,
        _parents=(
            (a, lambda g: _unbroadcast(g, a.data.shape)),
            (b, lambda g: _unbroadcast(-g, b.data.shape)),
        ),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(
        a.data * b.data,
        _parents=(
            (a, lambda g: _unbroadcast(g * b.data, a.data.shape)),
            (b, lambda g: _unbroadcast(g * a.data, b.data.shape)),
        ),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return Tensor(
        out,
        _parents=(
            (a, lambda g: _unbroadcast(g / b.data, a.data.shape)),
            (b, lambda g: _unbroadcast(-g * out / b.data, b.data.shape)),
        ),
    )


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    e = float(exponent)
    return Tensor(
        a.data**e,
        _parents=((a, lambda g: g * e * a.data ** (e - 1.0)),),
    )


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return Tensor(out, _parents=((a, lambda g: g * out),))


def log(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(np.log(a.data), _parents=((a, lambda g: g / a.data),))


def log1p(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(np.log1p(a.data), _parents=((a, lambda g: g / (1.0 + a.data)),))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return Tensor(out, _parents=((a, lambda g: g * 0.5 / out),))


def absolute(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(np.abs(a.data), _parents=((a, lambda g: g * np.sign(a.data)),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return Tensor(np.where(mask, a.data, 0.0), _parents=((a, lambda g: g * mask),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.data))
    return Tensor(out, _parents=((a, lambda g: g * out * (1.0 - out)),))


# ------------------------------------------------------------------- reductions
def _axis_tuple(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        return (axis % ndim,)
    return tuple(a % ndim for a in axis)


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    axes = _axis_tuple(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return np.broadcast_to(g, a.data.shape).copy()

    return Tensor(out, _parents=((a, vjp),))


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    axes = _axis_tuple(axis, a.ndim)
    count = 1
    for ax in axes:
        count *= a.data.shape[ax]
    return mul(tsum(a, axes, keepdims), 1.0 / count)


# ------------------------------------------------------------------------ shape
def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return Tensor(
        a.data.reshape(shape),
        _parents=((a, lambda g: g.reshape(a.data.shape)),),
    )


def transpose(a, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return Tensor(
        a.data.transpose(axes),
        _parents=((a, lambda g: g.transpose(inverse)),),
    )


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)
    out = np.concatenate([t.data for t in tensors], axis=axis)

    def make_vjp(i):
        lo, hi = offsets[i], offsets[i + 1]

        def vjp(g):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            return g[tuple(idx)]

        return vjp

    return Tensor(out, _parents=tuple((t, make_vjp(i)) for i, t in enumerate(tensors)))


def take(a, idx) -> Tensor:
    """Indexing / slicing; gradient scatter-adds back into place."""
    a = as_tensor(a)

    def vjp(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return out

    return Tensor(a.data[idx], _parents=((a, vjp),))


def put_rows(base, idx, rows) -> Tensor:
    """Copy of ``base`` with ``base[idx] = rows`` along axis 0.

    ``idx`` must not contain duplicates; used to splice per-row results
    (e.g. stylized batch elements) back into a batch.
    """
    base, rows = as_tensor(base), as_tensor(rows)
    out = base.data.copy()
    out[idx] = rows.data

    def vjp_base(g):
        gb = g.copy()
        gb[idx] = 0.0
        return gb

    return Tensor(out, _parents=((base, vjp_base), (rows, lambda g: g[idx])))


# ----------------------------------------------------------------- linear algebra
def matmul(a, b) -> Tensor:
    """Batched matrix product with numpy broadcasting on leading axes."""
    a, b = as_tensor(a), as_tensor(b)

    def _swap(x):
        return np.swapaxes(x, -1, -2)

    return Tensor(
        np.matmul(a.data, b.data),
        _parents=(
            (a, lambda g: _unbroadcast(np.matmul(g, _swap(b.data)), a.data.shape)),
            (b, lambda g: _unbroadcast(np.matmul(_swap(a.data), g), b.data.shape)),
        ),
    )


# --------------------------------------------------------------- conv primitives
def _conv_geometry(h, w, ksize, stride, pad):
    ho = (h + 2 * pad - ksize) // stride + 1
    wo = (w + 2 * pad - ksize) // stride + 1
    return ho, wo


def im2col(x, ksize: int, stride: int = 1, pad: int | None = None) -> Tensor:
    """Unfold (B, C, H, W) into (B, C*k*k, Ho*Wo) patch columns."""
    x = as_tensor(x)
    if pad is None:
        pad = ksize // 2
    b, c, h, w = x.data.shape
    ho, wo = _conv_geometry(h, w, ksize, stride, pad)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((b, c, ksize, ksize, ho, wo), dtype=np.float64)
    for i in range(ksize):
        for j in range(ksize):
            cols[:, :, i, j] = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]

    def vjp(g):
        g6 = g.reshape(b, c, ksize, ksize, ho, wo)
        gx = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=np.float64)
        for i in range(ksize):
            for j in range(ksize):
                gx[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += g6[:, :, i, j]
        if pad:
            gx = gx[:, :, pad:-pad, pad:-pad]
        return gx

    return Tensor(cols.reshape(b, c * ksize * ksize, ho * wo), _parents=((x, vjp),))


def conv2d(x, weight, bias=None, stride: int = 1, pad: int | None = None) -> Tensor:
    """Cross-correlation of (B, Cin, H, W) with (Cout, Cin, k, k)."""
    x, weight = as_tensor(x), as_tensor(weight)
    cout, cin, k, _ = weight.data.shape
    if x.data.shape[1] != cin:
        raise ValueError(
            f"conv2d: input has {x.data.shape[1]} channels, kernel expects {cin}"
        )
    if pad is None:
        pad = k // 2
    b, _, h, w = x.data.shape
    ho, wo = _conv_geometry(h, w, k, stride, pad)
    cols = im2col(x, k, stride, pad)
    out = matmul(reshape(weight, (cout, cin * k * k)), cols)
    out = reshape(out, (b, cout, ho, wo))
    if bias is not None:
        out = add(out, reshape(bias, (1, cout, 1, 1)))
    return out


# ------------------------------------------------------------------ compositions
def softmax(z, axis: int = -1) -> Tensor:
    z = as_tensor(z)
    shift = sub(z, np.max(z.data, axis=axis, keepdims=True))
    e = exp(shift)
    return div(e, tsum(e, axis=axis, keepdims=True))


def logsumexp(z, axis: int = -1) -> Tensor:
    z = as_tensor(z)
    m = np.max(z.data, axis=axis, keepdims=True)
    return add(log(tsum(exp(sub(z, m)), axis=axis, keepdims=True)), m)


# ------------------------------------------------------------- gradient reversal
def grad_reverse(x, strength: float = 1.0) -> Tensor:
    """Identity forward; multiplies the upstream gradient by ``-strength``."""
    x = as_tensor(x)
    s = float(strength)
    if s < 0:
        raise ValueError(f"grad_reverse strength must be >= 0, got {s}")
    return Tensor(x.data, _parents=((x, lambda g: -s * g),))
