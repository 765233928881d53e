# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled convolution and pooling kernels; see _pykernels for the contract.

Input buffers are declared ``const`` so read-only views (broadcasts,
frozen arrays) are accepted without a copy.
"""
import numpy as np

from libc.stdint cimport int64_t

ctypedef fused real:
    float
    double


cdef inline object _dtype(real dummy):
    if real is double:
        return np.float64
    return np.float32


def im2col(const real[:, :, :, ::1] xp, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t sh, Py_ssize_t sw):
    cdef Py_ssize_t n = xp.shape[0], c = xp.shape[1], hp = xp.shape[2], wp = xp.shape[3]
    cdef Py_ssize_t oh = (hp - kh) // sh + 1, ow = (wp - kw) // sw + 1
    out = np.empty((c * kh * kw, n * oh * ow), dtype=_dtype(<real>0))
    cdef real[:, ::1] cols = out
    cdef Py_ssize_t ci, i, j, b, y, x, row, col, src_y
    with nogil:
        for ci in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ci * kh + i) * kw + j
                    col = 0
                    for b in range(n):
                        for y in range(oh):
                            src_y = y * sh + i
                            for x in range(ow):
                                cols[row, col] = xp[b, ci, src_y, x * sw + j]
                                col += 1
    return out


def col2im(const real[:, ::1] cols, Py_ssize_t n, Py_ssize_t c, Py_ssize_t hp, Py_ssize_t wp,
           Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t sh, Py_ssize_t sw):
    cdef Py_ssize_t oh = (hp - kh) // sh + 1, ow = (wp - kw) // sw + 1
    out = np.zeros((n, c, hp, wp), dtype=_dtype(<real>0))
    cdef real[:, :, :, ::1] xp = out
    cdef Py_ssize_t ci, i, j, b, y, x, row, col, dst_y
    with nogil:
        for ci in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ci * kh + i) * kw + j
                    col = 0
                    for b in range(n):
                        for y in range(oh):
                            dst_y = y * sh + i
                            for x in range(ow):
                                xp[b, ci, dst_y, x * sw + j] += cols[row, col]
                                col += 1
    return out


def maxpool_forward(const real[:, :, :, ::1] xp, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t sh, Py_ssize_t sw):
    cdef Py_ssize_t n = xp.shape[0], c = xp.shape[1], hp = xp.shape[2], wp = xp.shape[3]
    cdef Py_ssize_t oh = (hp - kh) // sh + 1, ow = (wp - kw) // sw + 1
    out_arr = np.empty((n, c, oh, ow), dtype=_dtype(<real>0))
    arg_arr = np.empty((n, c, oh, ow), dtype=np.int64)
    cdef real[:, :, :, ::1] out = out_arr
    cdef int64_t[:, :, :, ::1] arg = arg_arr
    cdef Py_ssize_t b, ci, y, x, i, j, best_k
    cdef real best, v
    with nogil:
        for b in range(n):
            for ci in range(c):
                for y in range(oh):
                    for x in range(ow):
                        best = xp[b, ci, y * sh, x * sw]
                        best_k = 0
                        for i in range(kh):
                            for j in range(kw):
                                v = xp[b, ci, y * sh + i, x * sw + j]
                                # strict comparison keeps the first maximum on ties
                                if v > best:
                                    best = v
                                    best_k = i * kw + j
                        out[b, ci, y, x] = best
                        arg[b, ci, y, x] = best_k
    return out_arr, arg_arr


def maxpool_backward(const real[:, :, :, ::1] g, const int64_t[:, :, :, ::1] arg, Py_ssize_t hp, Py_ssize_t wp,
                     Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t sh, Py_ssize_t sw):
    cdef Py_ssize_t n = g.shape[0], c = g.shape[1], oh = g.shape[2], ow = g.shape[3]
    out_arr = np.zeros((n, c, hp, wp), dtype=_dtype(<real>0))
    cdef real[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, ci, y, x, k
    with nogil:
        for b in range(n):
            for ci in range(c):
                for y in range(oh):
                    for x in range(ow):
                        k = arg[b, ci, y, x]
                        out[b, ci, y * sh + k // kw, x * sw + k % kw] += g[b, ci, y, x]
    return out_arr
