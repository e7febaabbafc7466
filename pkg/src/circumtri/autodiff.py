"""Minimal reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps a float64 ndarray; operations record closures that scatter the
upstream gradient to their inputs. Only the ops needed by the detector are
provided: broadcastable arithmetic, matmul, relu, softplus/sigmoid, gather,
reshape/repeat and reductions. Backward runs in reverse topological order.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'yes' if self.requires_grad else 'no'})"

    # -- graph traversal ----------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- operators ------------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)

        def bwd(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.shape))
        return Tensor(self.data + other.data, parents=(self, other), backward=bwd)

    __radd__ = __add__

    def __neg__(self):
        def bwd(g):
            if self.requires_grad:
                self._accumulate(-g)
        return Tensor(-self.data, parents=(self,), backward=bwd)

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)

        def bwd(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.shape))
        return Tensor(self.data * other.data, parents=(self, other), backward=bwd)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        if isinstance(scalar, Tensor):
            raise TypeError("tensor/tensor division is not supported")
        return self * (1.0 / scalar)

    def matmul(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data

        def bwd(g):
            # With a stacked left operand and a plain matrix on the right
            # (the linear-layer case), flatten to single GEMMs instead of
            # letting numpy loop tiny batched products.
            if self.requires_grad:
                if b.ndim == 2 and g.ndim > 2:
                    ga = (g.reshape(-1, g.shape[-1]) @ b.T).reshape(a.shape)
                else:
                    ga = _unbroadcast(g @ np.swapaxes(b, -1, -2), a.shape)
                self._accumulate(ga)
            if other.requires_grad:
                if b.ndim == 2 and a.ndim > 2:
                    gb = a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
                else:
                    gb = _unbroadcast(np.swapaxes(a, -1, -2) @ g, b.shape)
                other._accumulate(gb)
        return Tensor(a @ b, parents=(self, other), backward=bwd)

    __matmul__ = matmul

    # -- shape ops --------------------------------------------------------

    def reshape(self, *shape):
        old = self.data.shape

        def bwd(g):
            if self.requires_grad:
                self._accumulate(g.reshape(old))
        return Tensor(self.data.reshape(*shape), parents=(self,), backward=bwd)

    def tile_last(self, reps: int):
        """Repeat the whole tensor `reps` times along the last axis."""
        def bwd(g):
            if self.requires_grad:
                split = g.reshape(*g.shape[:-1], reps, self.data.shape[-1])
                self._accumulate(split.sum(axis=-2))
        return Tensor(np.tile(self.data, reps), parents=(self,), backward=bwd)

    def take(self, flat_indices):
        """Gather elements of the flattened tensor; returns a 1-D tensor."""
        flat_indices = np.asarray(flat_indices, dtype=np.int64)
        old_shape = self.data.shape

        def bwd(g):
            if self.requires_grad:
                acc = np.zeros(self.data.size)
                np.add.at(acc, flat_indices, g)
                self._accumulate(acc.reshape(old_shape))
        return Tensor(self.data.reshape(-1)[flat_indices],
                      parents=(self,), backward=bwd)

    # -- reductions -----------------------------------------------------------

    def sum(self, axis=None):
        old_shape = self.data.shape

        def bwd(g):
            if not self.requires_grad:
                return
            if axis is None:
                self._accumulate(np.broadcast_to(g, old_shape).copy())
            else:
                self._accumulate(np.broadcast_to(
                    np.expand_dims(g, axis), old_shape).copy())
        return Tensor(self.data.sum(axis=axis), parents=(self,), backward=bwd)

    def mean(self, axis=None):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis) / n

    # -- nonlinearities ----------------------------------------------------

    def relu(self):
        mask = self.data > 0

        def bwd(g):
            if self.requires_grad:
                self._accumulate(g * mask)
        return Tensor(self.data * mask, parents=(self,), backward=bwd)

    def clip(self, lo, hi):
        """Clamp values; gradient passes through only inside the bounds."""
        inside = (self.data > lo) & (self.data < hi)

        def bwd(g):
            if self.requires_grad:
                self._accumulate(g * inside)
        return Tensor(np.clip(self.data, lo, hi), parents=(self,), backward=bwd)

    def softplus(self):
        """log(1 + exp(x)), evaluated stably; d/dx = sigmoid(x)."""
        x = self.data
        out = np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))
        sig = _sigmoid(x)

        def bwd(g):
            if self.requires_grad:
                self._accumulate(g * sig)
        return Tensor(out, parents=(self,), backward=bwd)

    def abs(self):
        sign = np.sign(self.data)

        def bwd(g):
            if self.requires_grad:
                self._accumulate(g * sign)
        return Tensor(np.abs(self.data), parents=(self,), backward=bwd)

    def square(self):
        return self * self

    def smooth_l1(self):
        """Elementwise smooth-L1: x^2/2 for |x| < 1, |x| - 1/2 beyond."""
        x = self.data
        small = np.abs(x) < 1.0
        out = np.where(small, 0.5 * x * x, np.abs(x) - 0.5)
        dx = np.where(small, x, np.sign(x))

        def bwd(g):
            if self.requires_grad:
                self._accumulate(g * dx)
        return Tensor(out, parents=(self,), backward=bwd)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function (plain ndarray helper)."""
    return _sigmoid(np.asarray(x, dtype=np.float64))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    """A leaf tensor that accumulates gradients."""
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)
