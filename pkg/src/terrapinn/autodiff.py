"""Minimal reverse-mode automatic differentiation over numpy arrays.

Tensors form an implicit DAG through parent references; backward() walks
the graph once in reverse topological order, accumulating gradients into
every requires-grad leaf.  Single-threaded and deterministic: identical
inputs give bit-identical forward and backward results.
"""

from __future__ import annotations

import numpy as np


def _as_array(x) -> np.ndarray:
    return x.astype(float) if isinstance(x, np.ndarray) else np.asarray(x, dtype=float)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """Array node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf",
                 parents=(), backward=None):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.op = op
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.data.shape})"

    # -- graph traversal ----------------------------------------------------

    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(leaf) into every requires-grad ancestor.

        self must be scalar unless an explicit seed gradient is given.
        """
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        order = topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): _as_array(grad)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad and node._parents == ():
                node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                pg = _unbroadcast(pg, parent.data.shape)
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    # -- operator sugar -----------------------------------------------------

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

    def __getitem__(self, index):
        return take(self, index)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


def topological_order(root: Tensor) -> list[Tensor]:
    """Iterative depth-first topological sort of the DAG below root."""
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
            if id(p) not in seen:
                stack.append((p, False))
    return order


# ---------------------------------------------------------------------------
# Primitive operations
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return Tensor(a.data + b.data, op="add", parents=(a, b),
                  backward=lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return Tensor(a.data - b.data, op="sub", parents=(a, b),
                  backward=lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return Tensor(a.data * b.data, op="mul", parents=(a, b),
                  backward=lambda g: (g * b.data, g * a.data))


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return Tensor(a.data / b.data, op="div", parents=(a, b),
                  backward=lambda g: (g / b.data, -g * a.data / b.data ** 2))


def power(a, exponent: float) -> Tensor:
    a = _wrap(a)
    return Tensor(a.data ** exponent, op="pow", parents=(a,),
                  backward=lambda g: (g * exponent * a.data ** (exponent - 1),))


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2) if b.data.ndim > 1 else np.outer(g, b.data)
        gb = np.swapaxes(a.data, -1, -2) @ g if a.data.ndim > 1 else np.outer(a.data, g)
        return ga, gb

    return Tensor(a.data @ b.data, op="matmul", parents=(a, b), backward=backward)


def _reduce(op_name, np_fn, a, axis, keepdims):
    a = _wrap(a)
    out = np_fn(a.data, axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g)
        if not keepdims and axis is not None:
            g = np.expand_dims(g, axis)
        if op_name == "mean":
            count = a.data.size if axis is None else np.prod(
                [a.data.shape[ax] for ax in np.atleast_1d(axis)])
            g = g / count
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return Tensor(out, op=op_name, parents=(a,), backward=backward)


def tensor_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    return _reduce("sum", np.sum, a, axis, keepdims)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    return _reduce("mean", np.mean, a, axis, keepdims)


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    return Tensor(a.data.reshape(shape), op="reshape", parents=(a,),
                  backward=lambda g: (g.reshape(a.data.shape),))


def transpose(a, axes) -> Tensor:
    a = _wrap(a)
    inverse = np.argsort(axes)
    return Tensor(a.data.transpose(axes), op="transpose", parents=(a,),
                  backward=lambda g: (g.transpose(inverse),))


def take(a, index) -> Tensor:
    """Basic (non-fancy) indexing; gradient scatters back into place."""
    a = _wrap(a)

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] += g
        return (full,)

    return Tensor(a.data[index], op="take", parents=(a,), backward=backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(np.concatenate([t.data for t in tensors], axis=axis),
                  op="concat", parents=tuple(tensors), backward=backward)


def tanh(a) -> Tensor:
    a = _wrap(a)
    out = np.tanh(a.data)
    return Tensor(out, op="tanh", parents=(a,),
                  backward=lambda g: (g * (1.0 - out ** 2),))


def exp(a) -> Tensor:
    a = _wrap(a)
    out = np.exp(a.data)
    return Tensor(out, op="exp", parents=(a,), backward=lambda g: (g * out,))


def log(a) -> Tensor:
    a = _wrap(a)
    return Tensor(np.log(a.data), op="log", parents=(a,),
                  backward=lambda g: (g / a.data,))


def sqrt(a) -> Tensor:
    a = _wrap(a)
    out = np.sqrt(a.data)
    return Tensor(out, op="sqrt", parents=(a,),
                  backward=lambda g: (g * 0.5 / out,))


def sin(a) -> Tensor:
    a = _wrap(a)
    return Tensor(np.sin(a.data), op="sin", parents=(a,),
                  backward=lambda g: (g * np.cos(a.data),))


def cos(a) -> Tensor:
    a = _wrap(a)
    return Tensor(np.cos(a.data), op="cos", parents=(a,),
                  backward=lambda g: (g * -np.sin(a.data),))


def absolute(a) -> Tensor:
    a = _wrap(a)
    return Tensor(np.abs(a.data), op="abs", parents=(a,),
                  backward=lambda g: (g * np.sign(a.data),))


def relu(a) -> Tensor:
    a = _wrap(a)
    return Tensor(np.maximum(a.data, 0.0), op="relu", parents=(a,),
                  backward=lambda g: (g * (a.data > 0.0),))


def softplus(a) -> Tensor:
    """Smooth rectifier log(1 + e^x), numerically stable."""
    a = _wrap(a)
    out = np.logaddexp(0.0, a.data)

    def backward(g):
        return (g / (1.0 + np.exp(-a.data)),)

    return Tensor(out, op="softplus", parents=(a,), backward=backward)


def clip(a, lo, hi) -> Tensor:
    """Hard clamp with zero gradient outside [lo, hi]."""
    a = _wrap(a)
    mask = (a.data >= lo) & (a.data <= hi)
    return Tensor(np.clip(a.data, lo, hi), op="clip", parents=(a,),
                  backward=lambda g: (g * mask,))


def where(cond, a, b) -> Tensor:
    """cond is a plain boolean array, not differentiated through."""
    a, b = _wrap(a), _wrap(b)
    cond = np.asarray(cond, dtype=bool)
    return Tensor(np.where(cond, a.data, b.data), op="where", parents=(a, b),
                  backward=lambda g: (g * cond, g * ~cond))


def stop_gradient(a) -> Tensor:
    """Value of a with the backward edge severed: gradients through the
    returned tensor are exactly zero with respect to everything upstream."""
    a = _wrap(a)
    return Tensor(a.data, op="stop_gradient", parents=(), backward=None)


def softmax(a, axis: int = -1) -> Tensor:
    """Softmax along axis (composed; shift by a constant max for stability)."""
    a = _wrap(a)
    shifted = sub(a, np.max(a.data, axis=axis, keepdims=True))
    e = exp(shifted)
    return div(e, tensor_sum(e, axis=axis, keepdims=True))


def layer_norm(a, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale."""
    mu = mean(a, axis=-1, keepdims=True)
    centered = sub(a, mu)
    var = mean(mul(centered, centered), axis=-1, keepdims=True)
    normed = div(centered, sqrt(add(var, eps)))
    return add(mul(normed, gain), bias)
