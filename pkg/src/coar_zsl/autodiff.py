"""Minimal reverse-mode automatic differentiation over float64 NumPy arrays.

Every trainable quantity in this package is a :class:`Tensor`; operations
build a graph of vector-Jacobian closures which ``backward`` replays in
reverse topological order.  Only what the models need is implemented:
broadcasting arithmetic, (batched) matmul, a handful of pointwise
nonlinearities, single-axis reductions, and shape/index plumbing.
Convolution, pooling and resizing live in ``nnops`` on top of the
``kernels`` backends.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

Array = np.ndarray


def _as_array(x) -> Array:
    if isinstance(x, np.ndarray) and x.dtype == np.float64:
        return x
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Sum gradient ``g`` down to ``shape`` (the adjoint of broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tensor:
    """A float64 array plus the graph edge needed to backpropagate into it."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad: Array | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[Array], Sequence[Array | None]] | None = None

    # -- construction helpers ------------------------------------------------

    @staticmethod
    def _node(data: Array, parents: tuple["Tensor", ...], vjp) -> "Tensor":
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._vjp = vjp
        return out

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- bookkeeping ----------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    def backward(self, grad: Array | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every graph leaf."""
        if grad is None:
            if self.data.ndim != 0:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        else:
            grad = _as_array(grad)

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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

        grads: dict[int, Array] = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._vjp is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for p, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                grads[key] = pg if key not in grads else grads[key] + pg

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other):
        other = _wrap(other)
        out = self.data + other.data

        def vjp(g):
            return _unbroadcast(g, self.shape), _unbroadcast(g, other.shape)

        return Tensor._node(out, (self, other), vjp)

    __radd__ = __add__

    def __neg__(self):
        return Tensor._node(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-_wrap(other))

    def __rsub__(self, other):
        return _wrap(other) + (-self)

    def __mul__(self, other):
        other = _wrap(other)
        out = self.data * other.data

        def vjp(g):
            return (_unbroadcast(g * other.data, self.shape),
                    _unbroadcast(g * self.data, other.shape))

        return Tensor._node(out, (self, other), vjp)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _wrap(other)
        out = self.data / other.data

        def vjp(g):
            return (_unbroadcast(g / other.data, self.shape),
                    _unbroadcast(-g * self.data / other.data ** 2, other.shape))

        return Tensor._node(out, (self, other), vjp)

    def __rtruediv__(self, other):
        return _wrap(other) / self

    def __pow__(self, exponent: float):
        out = self.data ** exponent

        def vjp(g):
            return (g * exponent * self.data ** (exponent - 1),)

        return Tensor._node(out, (self,), vjp)

    def __matmul__(self, other):
        other = _wrap(other)
        a, b = self.data, other.data
        out = a @ b

        def vjp(g):
            ga = _unbroadcast(g @ b.swapaxes(-1, -2), a.shape)
            gb = _unbroadcast(a.swapaxes(-1, -2) @ g, b.shape)
            return ga, gb

        return Tensor._node(out, (self, other), vjp)

    # -- pointwise ------------------------------------------------------------

    def relu(self):
        mask = self.data > 0
        return Tensor._node(np.where(mask, self.data, 0.0), (self,),
                            lambda g: (g * mask,))

    def exp(self):
        out = np.exp(self.data)
        return Tensor._node(out, (self,), lambda g: (g * out,))

    def log(self):
        return Tensor._node(np.log(self.data), (self,),
                            lambda g: (g / self.data,))

    def sqrt(self):
        out = np.sqrt(self.data)
        return Tensor._node(out, (self,), lambda g: (g / (2.0 * out),))

    def tanh(self):
        out = np.tanh(self.data)
        return Tensor._node(out, (self,), lambda g: (g * (1.0 - out ** 2),))

    def clip_min(self, lo: float):
        """max(x, lo); gradient flows only where x > lo."""
        mask = self.data > lo
        return Tensor._node(np.where(mask, self.data, lo), (self,),
                            lambda g: (g * mask,))

    # -- reductions -----------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = self.data.sum(axis=axis, keepdims=keepdims)
        shape = self.shape

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, shape).copy() if not keepdims
                        else np.broadcast_to(g, shape).copy(),)
            g2 = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(g2, shape).copy(),)

        return Tensor._node(out, (self,), vjp)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else np.prod(
            [self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    def max(self, axis: int, keepdims: bool = False):
        """Max along one axis; ties route gradient to the first occurrence."""
        idx = np.argmax(self.data, axis=axis)
        out_kd = np.take_along_axis(self.data, np.expand_dims(idx, axis), axis=axis)
        out = out_kd if keepdims else np.squeeze(out_kd, axis=axis)
        shape = self.shape

        def vjp(g):
            g2 = g if keepdims else np.expand_dims(g, axis)
            gx = np.zeros(shape)
            np.put_along_axis(gx, np.expand_dims(idx, axis), g2, axis=axis)
            return (gx,)

        return Tensor._node(out, (self,), vjp)

    # -- shape / indexing -------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return Tensor._node(self.data.reshape(shape), (self,),
                            lambda g: (g.reshape(old),))

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = np.argsort(axes)
        return Tensor._node(self.data.transpose(axes), (self,),
                            lambda g: (g.transpose(inv),))

    def __getitem__(self, key):
        out = self.data[key]
        shape = self.shape

        def vjp(g):
            gx = np.zeros(shape)
            np.add.at(gx, key, g)
            return (gx,)

        return Tensor._node(out, (self,), vjp)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = [_wrap(t) for t in tensors]
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._node(out, tuple(ts), vjp)


def stack(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = [_wrap(t) for t in tensors]
    out = np.stack([t.data for t in ts], axis=axis)

    def vjp(g):
        return tuple(np.moveaxis(g, axis, 0))

    return Tensor._node(out, tuple(ts), vjp)


def softmax(x: Tensor, axis: int) -> Tensor:
    """Numerically stable softmax; the shift is a constant, so exact."""
    shift = Tensor(x.data.max(axis=axis, keepdims=True))
    e = (x - shift).exp()
    return e / e.sum(axis=axis, keepdims=True)
