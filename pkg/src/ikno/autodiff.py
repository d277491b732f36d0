"""Minimal reverse-mode automatic differentiation over float64 ndarrays.

Just enough machinery for the operator network: broadcast arithmetic,
matmul, elementwise transcendentals, reductions, slicing/reshaping/concat,
and a hook for custom vector-Jacobian products (used by the Kronecker
resolvent operators, whose forward passes go through eigendecompositions
that we never differentiate through directly).
"""

from __future__ import annotations

import numpy as np

__all__ = ["Tensor", "constant", "concat", "custom_op"]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce ``grad`` back to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False, parents=(), vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.grad = None
        self._parents = parents
        self._vjp = vjp

    @property
    def shape(self):
        return self.data.shape

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        topo, seen = [], set()

        def visit(t):
            if id(t) in seen or not t.requires_grad:
                return
            seen.add(id(t))
            for p in t._parents:
                visit(p)
            topo.append(t)

        visit(self)
        self.grad = np.ones_like(self.data)
        for t in reversed(topo):
            if t._vjp is not None:
                t._vjp(t.grad)

    # -- arithmetic ---------------------------------------------------------

    def _binary(self, other, fwd, vjp_a, vjp_b):
        other = other if isinstance(other, Tensor) else Tensor(other)
        a, b = self, other
        out_data = fwd(a.data, b.data)

        def vjp(g):
            if a.requires_grad:
                a._accum(_unbroadcast(vjp_a(g, a.data, b.data), a.data.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(vjp_b(g, a.data, b.data), b.data.shape))

        return Tensor(out_data, parents=(a, b), vjp=vjp)

    def __add__(self, other):
        return self._binary(other, lambda a, b: a + b, lambda g, a, b: g, lambda g, a, b: g)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, lambda a, b: a - b, lambda g, a, b: g, lambda g, a, b: -g)

    def __rsub__(self, other):
        return Tensor(other) - self

    def __mul__(self, other):
        return self._binary(
            other, lambda a, b: a * b, lambda g, a, b: g * b, lambda g, a, b: g * a
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(
            other,
            lambda a, b: a / b,
            lambda g, a, b: g / b,
            lambda g, a, b: -g * a / (b * b),
        )

    def __rtruediv__(self, other):
        return Tensor(other) / self

    def __neg__(self):
        return self * -1.0

    def __matmul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        a, b = self, other
        out_data = a.data @ b.data

        def vjp(g):
            if a.requires_grad:
                a._accum(g @ b.data.T)
            if b.requires_grad:
                b._accum(a.data.T @ g)

        return Tensor(out_data, parents=(a, b), vjp=vjp)

    def __pow__(self, n):
        if not isinstance(n, (int, float)):
            raise TypeError("only constant exponents supported")
        a = self
        out_data = a.data**n

        def vjp(g):
            if a.requires_grad:
                a._accum(g * n * a.data ** (n - 1))

        return Tensor(out_data, parents=(a,), vjp=vjp)

    # -- elementwise --------------------------------------------------------

    def _unary(self, fwd, dfwd):
        a = self
        out_data = fwd(a.data)

        def vjp(g):
            if a.requires_grad:
                a._accum(g * dfwd(a.data, out_data))

        return Tensor(out_data, parents=(a,), vjp=vjp)

    def exp(self):
        return self._unary(np.exp, lambda x, y: y)

    def tanh(self):
        return self._unary(np.tanh, lambda x, y: 1.0 - y * y)

    def sqrt(self):
        return self._unary(np.sqrt, lambda x, y: 0.5 / y)

    def abs(self):
        return self._unary(np.abs, lambda x, y: np.sign(x))

    # -- reductions / shaping -----------------------------------------------

    def sum(self, axis=None, keepdims=False):
        a = self
        out_data = a.data.sum(axis=axis, keepdims=keepdims)

        def vjp(g):
            if not a.requires_grad:
                return
            if axis is None:
                a._accum(np.broadcast_to(g, a.data.shape).copy())
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                a._accum(np.broadcast_to(gg, a.data.shape).copy())

        return Tensor(out_data, parents=(a,), vjp=vjp)

    def reshape(self, *shape):
        a = self
        out_data = a.data.reshape(*shape)

        def vjp(g):
            if a.requires_grad:
                a._accum(g.reshape(a.data.shape))

        return Tensor(out_data, parents=(a,), vjp=vjp)

    @property
    def T(self):
        a = self
        out_data = a.data.T

        def vjp(g):
            if a.requires_grad:
                a._accum(g.T)

        return Tensor(out_data, parents=(a,), vjp=vjp)

    def __getitem__(self, idx):
        a = self
        out_data = a.data[idx]

        def vjp(g):
            if a.requires_grad:
                full = np.zeros_like(a.data)
                np.add.at(full, idx, g)
                a._accum(full)

        return Tensor(out_data, parents=(a,), vjp=vjp)

    def item(self):
        return float(self.data)


def constant(data) -> Tensor:
    return Tensor(data)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accum(g[tuple(sl)])

    return Tensor(out_data, parents=tuple(tensors), vjp=vjp)


def custom_op(inputs: list[Tensor], out_data: np.ndarray, backward) -> Tensor:
    """Wrap a forward result with a hand-written vector-Jacobian product.

    ``backward(g)`` must return one gradient array (or None) per input, in
    order.
    """

    def vjp(g):
        grads = backward(g)
        for t, gr in zip(inputs, grads):
            if t.requires_grad and gr is not None:
                t._accum(np.asarray(gr, dtype=np.float64).reshape(t.data.shape))

    return Tensor(out_data, parents=tuple(inputs), vjp=vjp)
