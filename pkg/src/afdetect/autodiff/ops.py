"""Elementwise, reduction and linear-algebra ops with broadcasting."""
from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from .tensor import Tensor, as_tensor, make_result


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _pair(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.dtype != b.dtype:
        # python scalars adopt the tensor's precision
        if not b.requires_grad and b.ndim == 0:
            b = Tensor(b.data.astype(a.dtype))
        elif not a.requires_grad and a.ndim == 0:
            a = Tensor(a.data.astype(b.dtype))
    return a, b


def add(a, b):
    a, b = _pair(a, b)
    return make_result(a.data + b.data, (a, b),
                       lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = _pair(a, b)
    return make_result(a.data - b.data, (a, b),
                       lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = _pair(a, b)
    return make_result(a.data * b.data, (a, b),
                       lambda g: (_unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
                                  _unbroadcast(g * a.data, b.shape) if b.requires_grad else None))


def div(a, b):
    a, b = _pair(a, b)
    out = a.data / b.data
    return make_result(out, (a, b),
                       lambda g: (_unbroadcast(g / b.data, a.shape) if a.requires_grad else None,
                                  _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None))


def power(a, exponent: float):
    a = as_tensor(a)
    return make_result(a.data ** exponent, (a,),
                       lambda g: (g * exponent * a.data ** (exponent - 1),))


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return make_result(out, (a,), lambda g: (g * out,))


def log(a):
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):  # make_result reports non-finite output
        out = np.log(a.data)
    return make_result(out, (a,), lambda g: (g / a.data,))


def sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_result(out, (a,), backward)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return mul(sum(a, axis, keepdims), 1.0 / count)


def reshape(a, shape):
    a = as_tensor(a)
    return make_result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def flatten(a):
    """Collapse all but the leading (batch) axis."""
    return reshape(a, (a.shape[0], -1))


def matmul(a, b):
    a, b = _pair(a, b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"cannot multiply {a.shape} by {b.shape}")
    return make_result(a.data @ b.data, (a, b),
                       lambda g: (g @ b.data.T if a.requires_grad else None,
                                  a.data.T @ g if b.requires_grad else None))


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return make_result(np.concatenate([t.data for t in tensors], axis=axis), tensors,
                       lambda g: tuple(np.split(g, sizes, axis=axis)))


def index_columns(a, cols):
    """``a[:, cols]`` for a 2D tensor."""
    a = as_tensor(a)
    cols = np.asarray(cols)

    def backward(g):
        out = np.zeros_like(a.data)
        np.add.at(out, (slice(None), cols), g)
        return (out,)

    return make_result(a.data[:, cols], (a,), backward)
