"""Layer primitives: convolution, pooling, activations, batch norm, dense, BCE.

Spatial ops take batched inputs, ``(N, C, H, W)`` for 2D and ``(N, C, L)``
for 1D; an unbatched input gets a leading batch axis of one that is removed
again on the way out.
"""
from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from . import kernels
from .ops import matmul, reshape
from .tensor import Tensor, as_tensor, make_result


def _pair(v):
    return (v, v) if isinstance(v, int) else tuple(v)


def _out_size(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """Cross-correlation ``out[n,q,i,j] = b[q] + sum_{p,m,k} x[n,p,i*s+m-pad,j*s+k-pad] * w[q,p,m,k]``."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim == 3:
        return _squeeze0(conv2d(_unsqueeze0(x), weight, bias, stride, padding))
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeMismatch(f"conv2d expects (N,C,H,W) input and 4D kernel, got {x.shape} and {weight.shape}")
    n, c, h, w = x.shape
    o, c_w, kh, kw = weight.shape
    if c != c_w:
        raise ShapeMismatch(f"input has {c} channels, kernel expects {c_w}")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    if h + 2 * ph < kh or w + 2 * pw < kw:
        raise ShapeMismatch(f"padded input {h + 2 * ph}x{w + 2 * pw} smaller than kernel {kh}x{kw}")
    oh, ow = _out_size(h, kh, sh, ph), _out_size(w, kw, sw, pw)
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if ph or pw else np.ascontiguousarray(x.data)
    hp, wp = xp.shape[2:]
    cols = kernels.im2col(xp, kh, kw, sh, sw)
    w2 = weight.data.reshape(o, -1)
    out = (w2 @ cols).reshape(o, n, oh, ow).transpose(1, 0, 2, 3)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (o,):
            raise ShapeMismatch(f"bias shape {bias.shape} != ({o},)")
        out = out + bias.data[None, :, None, None]
        parents.append(bias)
    out = np.ascontiguousarray(out)

    def backward(g):
        g2 = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(o, -1)
        gw = (g2 @ cols.T).reshape(weight.shape) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            gxp = kernels.col2im(np.ascontiguousarray(w2.T @ g2), n, c, hp, wp, kh, kw, sh, sw)
            gx = gxp[:, :, ph:ph + h, pw:pw + w]
            gx = np.ascontiguousarray(gx)
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return make_result(out, parents, backward)


def conv1d(x, weight, bias=None, stride=1, padding=0):
    """1D analogue of :func:`conv2d` over ``(N, C, L)`` with kernels ``(O, C, k)``."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim == 2:
        return _squeeze0(conv1d(_unsqueeze0(x), weight, bias, stride, padding))
    if x.ndim != 3 or weight.ndim != 3:
        raise ShapeMismatch(f"conv1d expects (N,C,L) input and 3D kernel, got {x.shape} and {weight.shape}")
    n, c, length = x.shape
    x4 = reshape(x, (n, c, 1, length))
    w4 = reshape(weight, (weight.shape[0], weight.shape[1], 1, weight.shape[2]))
    out = conv2d(x4, w4, bias, (1, stride), (0, padding))
    return reshape(out, (n, out.shape[1], out.shape[3]))


def _unsqueeze0(x):
    return reshape(x, (1,) + x.shape)


def _squeeze0(x):
    return reshape(x, x.shape[1:])


def max_pool2d(x, kernel_size, stride=None, padding=0):
    """Max over windows; gradient goes to the first (row-major) maximum of each window."""
    x = as_tensor(x)
    kh, kw = _pair(kernel_size)
    sh, sw = _pair(stride if stride is not None else kernel_size)
    ph, pw = _pair(padding)
    n, c, h, w = x.shape
    xp = x.data
    if ph or pw:
        xp = np.pad(xp, ((0, 0), (0, 0), (ph, ph), (pw, pw)), constant_values=-np.inf)
    xp = np.ascontiguousarray(xp)
    hp, wp = xp.shape[2:]
    out, arg = kernels.maxpool_forward(xp, kh, kw, sh, sw)

    def backward(g):
        gxp = kernels.maxpool_backward(np.ascontiguousarray(g), arg, hp, wp, kh, kw, sh, sw)
        return (np.ascontiguousarray(gxp[:, :, ph:ph + h, pw:pw + w]),)

    return make_result(out, (x,), backward)


def max_pool1d(x, kernel_size, stride=None, padding=0):
    x = as_tensor(x)
    n, c, length = x.shape
    out = max_pool2d(reshape(x, (n, c, 1, length)), (1, kernel_size),
                     (1, stride if stride is not None else kernel_size), (0, padding))
    return reshape(out, (n, c, out.shape[3]))


def avg_pool2d(x, kernel_size, stride=None):
    """Mean over non-padded windows."""
    x = as_tensor(x)
    kh, kw = _pair(kernel_size)
    sh, sw = _pair(stride if stride is not None else kernel_size)
    n, c, h, w = x.shape
    xp = np.ascontiguousarray(x.data)
    cols = kernels.im2col(xp.reshape(n * c, 1, h, w), kh, kw, sh, sw)
    oh, ow = _out_size(h, kh, sh, 0), _out_size(w, kw, sw, 0)
    out = cols.mean(axis=0).reshape(n, c, oh, ow)

    def backward(g):
        gcols = np.broadcast_to(g.reshape(1, -1) / (kh * kw), (kh * kw, g.size))
        gx = kernels.col2im(np.ascontiguousarray(gcols), n * c, 1, h, w, kh, kw, sh, sw)
        return (gx.reshape(n, c, h, w),)

    return make_result(out, (x,), backward)


def avg_pool1d(x, kernel_size, stride=None):
    x = as_tensor(x)
    n, c, length = x.shape
    out = avg_pool2d(reshape(x, (n, c, 1, length)), (1, kernel_size),
                     (1, stride if stride is not None else kernel_size))
    return reshape(out, (n, c, out.shape[3]))


def global_avg_pool(x):
    """Average every spatial axis away: ``(N, C, ...) -> (N, C)``."""
    x = as_tensor(x)
    axes = tuple(range(2, x.ndim))
    count = int(np.prod([x.shape[a] for a in axes]))
    out = x.data.mean(axis=axes)

    def backward(g):
        return (np.broadcast_to(g.reshape(g.shape + (1,) * len(axes)) / count, x.shape).copy(),)

    return make_result(out, (x,), backward)


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return make_result(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def sigmoid(x):
    x = as_tensor(x)
    z = x.data
    ez = np.exp(-np.abs(z))
    p = np.where(z >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez)).astype(x.dtype)
    return make_result(p, (x,), lambda g: (g * p * (1.0 - p),))


def linear(x, weight, bias=None):
    """``y = x W^T + b`` for ``x`` of shape ``(N, F)`` and ``W`` of shape ``(O, F)``."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeMismatch(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    w_t = weight.data.T
    out = x.data @ w_t
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise ShapeMismatch(f"bias shape {bias.shape} != ({weight.shape[0]},)")
        out = out + bias.data
        parents.append(bias)

    def backward(g):
        grads = [g @ weight.data if x.requires_grad else None,
                 g.T @ x.data if weight.requires_grad else None]
        if bias is not None:
            grads.append(g.sum(axis=0))
        return grads

    return make_result(out, parents, backward)


def batch_norm(x, gamma=None, beta=None, running_mean=None, running_var=None,
               training=True, momentum=0.1, eps=1e-5):
    """Per-channel normalization over every axis except axis 1.

    In training mode batch statistics are used and ``running_mean`` /
    ``running_var`` (numpy arrays) are updated in place with the unbiased
    batch variance.  In eval mode the running statistics are used.
    """
    x = as_tensor(x)
    if x.ndim < 2:
        raise ShapeMismatch("batch_norm expects at least (N, C)")
    c = x.shape[1]
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, c) + (1,) * (x.ndim - 2)
    count = x.size // c
    if training:
        if count < 2:
            raise ShapeMismatch("batch_norm in training mode needs more than one value per channel")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if running_mean is not None:
            running_mean *= 1 - momentum
            running_mean += momentum * mu
        if running_var is not None:
            running_var *= 1 - momentum
            running_var += momentum * var * count / (count - 1)
    else:
        if running_mean is None or running_var is None:
            raise ValueError("eval-mode batch_norm needs running statistics")
        mu, var = running_mean, running_var
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mu.reshape(bshape)) * inv_std.reshape(bshape)
    out = xhat
    parents = [x]
    if gamma is not None:
        gamma, beta = as_tensor(gamma), as_tensor(beta)
        out = xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape)
        parents += [gamma, beta]

    def backward(g):
        dxhat = g * gamma.data.reshape(bshape) if gamma is not None else g
        if training:
            s1 = dxhat.sum(axis=axes, keepdims=True)
            s2 = (dxhat * xhat).sum(axis=axes, keepdims=True)
            gx = inv_std.reshape(bshape) / count * (count * dxhat - s1 - xhat * s2)
        else:
            gx = dxhat * inv_std.reshape(bshape)
        grads = [gx]
        if gamma is not None:
            grads += [(g * xhat).sum(axis=axes), g.sum(axis=axes)]
        return grads

    return make_result(out, parents, backward)


def binary_cross_entropy(prob, target, mask=None, eps=1e-7, reduction="sum"):
    """Masked BCE ``-sum mask * (y log p + (1-y) log(1-p))`` with ``p`` clamped to [eps, 1-eps].

    The clamp only guards the logarithms; the gradient is evaluated at the
    clamped point so saturated predictions still receive a learning signal.
    """
    prob = as_tensor(prob)
    y = np.broadcast_to(np.asarray(target, dtype=prob.dtype), prob.shape)
    m = np.ones(prob.shape, dtype=prob.dtype) if mask is None else np.broadcast_to(
        np.asarray(mask, dtype=prob.dtype), prob.shape)
    pc = np.clip(prob.data, eps, 1.0 - eps)
    terms = -(y * np.log(pc) + (1.0 - y) * np.log1p(-pc)) * m
    scale = 1.0
    if reduction == "mean":
        scale = 1.0 / max(float(m.sum()), 1.0)
    elif reduction != "sum":
        raise ValueError(f"unknown reduction {reduction!r}")
    total = np.asarray(terms.sum() * scale, dtype=prob.dtype)

    def backward(g):
        return (g * scale * m * (-(y / pc) + (1.0 - y) / (1.0 - pc)),)

    return make_result(total, (prob,), backward)
