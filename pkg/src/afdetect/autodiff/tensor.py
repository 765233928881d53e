"""Reverse-mode autodiff over numpy arrays.

A :class:`Tensor` produced by an op remembers its parents and a closure that
maps the output gradient to one gradient per parent.  ``backward`` walks the
graph once in reverse topological order; afterwards the graph is consumed.
"""
from __future__ import annotations

import contextlib

import numpy as np

from ..errors import GraphConsumed, NotScalar, ShapeMismatch

_grad_enabled = True
_check_finite = True


@contextlib.contextmanager
def no_grad():
    """Run ops without recording a graph (inference)."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


def set_finite_checks(enabled: bool) -> bool:
    global _check_finite
    prev, _check_finite = _check_finite, bool(enabled)
    return prev


def _as_array(data, dtype=None):
    arr = np.asarray(data, dtype=dtype)
    if dtype is None and arr.dtype.kind != "f":
        arr = arr.astype(np.float64)
    return arr


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed", "name")

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        self.data = _as_array(data, dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self._consumed = False
        self.name = name

    # -- introspection ---------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self):
        return self._backward is None

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    # -- graph -----------------------------------------------------------
    def backward(self):
        backward(self)

    # -- operators (implemented in ops) ----------------------------------
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __pow__(self, exponent):
        from . import ops
        return ops.power(self, exponent)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis, keepdims)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def make_result(data, parents, backward_fn) -> Tensor:
    """Wrap an op result; record the graph edge only if a parent needs gradients."""
    out = Tensor(data)
    if _check_finite and not np.all(np.isfinite(out.data)):
        raise FloatingPointError("non-finite value produced by a tensor op")
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _topological(root: Tensor):
    order, seen = [], {id(root)}
    stack = [(root, iter(root._parents))]
    while stack:
        node, parents = stack[-1]
        for p in parents:
            if p.requires_grad and p._backward is not None and id(p) not in seen:
                seen.add(id(p))
                stack.append((p, iter(p._parents)))
                break
        else:
            stack.pop()
            order.append(node)
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every requires_grad leaf."""
    if loss.size != 1:
        raise NotScalar(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise GraphConsumed("this graph was already differentiated")
    if not loss.requires_grad:
        raise NotScalar("loss does not depend on any tensor that requires grad")
    if loss._backward is None:
        seed = np.ones_like(loss.data)
        loss.grad = seed if loss.grad is None else loss.grad + seed
        return

    nodes = _topological(loss)
    pending = {id(loss): np.ones_like(loss.data)}
    for node in reversed(nodes):
        g = pending.pop(id(node), None)
        fn, parents = node._backward, node._parents
        node._backward, node._parents, node._consumed = None, (), True
        if g is None:
            continue
        for parent, pg in zip(parents, fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.data.shape:
                raise ShapeMismatch(f"gradient shape {pg.shape} != tensor shape {parent.data.shape}")
            if parent._backward is None:
                if parent._consumed:
                    continue
                parent.grad = pg.copy() if parent.grad is None else parent.grad + pg
            else:
                key = id(parent)
                pending[key] = pg if key not in pending else pending[key] + pg
