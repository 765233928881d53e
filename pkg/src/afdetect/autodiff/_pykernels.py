"""Pure numpy versions of the convolution and pooling kernels.

Same signatures and results as the compiled ``_ckernels`` module.  Inputs are
already padded; ``cols`` has shape ``(C*kh*kw, N*OH*OW)`` with rows ordered
``(c, i, j)`` and columns ordered ``(n, oh, ow)``.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _out_size(size, k, s):
    return (size - k) // s + 1


def im2col(xp, kh, kw, sh, sw):
    n, c, hp, wp = xp.shape
    oh, ow = _out_size(hp, kh, sh), _out_size(wp, kw, sw)
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw][:, :, :oh, :ow]
    # (N, C, OH, OW, kh, kw) -> (C, kh, kw, N, OH, OW)
    return np.ascontiguousarray(win.transpose(1, 4, 5, 0, 2, 3)).reshape(c * kh * kw, n * oh * ow)


def col2im(cols, n, c, hp, wp, kh, kw, sh, sw):
    oh, ow = _out_size(hp, kh, sh), _out_size(wp, kw, sw)
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    blocks = cols.reshape(c, kh, kw, n, oh, ow).transpose(3, 0, 1, 2, 4, 5)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + sh * (oh - 1) + 1:sh, j:j + sw * (ow - 1) + 1:sw] += blocks[:, :, i, j]
    return out


def maxpool_forward(xp, kh, kw, sh, sw):
    """Window maxima and the row-major index of the first maximum in each window."""
    n, c, hp, wp = xp.shape
    oh, ow = _out_size(hp, kh, sh), _out_size(wp, kw, sw)
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw][:, :, :oh, :ow]
    flat = win.reshape(n, c, oh, ow, kh * kw)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg.astype(np.int64)


def maxpool_backward(g, arg, hp, wp, kh, kw, sh, sw):
    n, c, oh, ow = g.shape
    out = np.zeros((n, c, hp, wp), dtype=g.dtype)
    for i in range(kh):
        for j in range(kw):
            hit = np.where(arg == i * kw + j, g, 0)
            out[:, :, i:i + sh * (oh - 1) + 1:sh, j:j + sw * (ow - 1) + 1:sw] += hit
    return out
