"""Slow, obviously-correct reference implementations used as test oracles.

None of these import the code under test; each is written from the
definition with plain loops or exhaustive enumeration.
"""
import math
from fractions import Fraction

import numpy as np


def mexican_hat_scalar(t):
    return 2.0 / (math.sqrt(3.0) * math.pi ** 0.25) * math.exp(-t * t / 2.0) * (1.0 - t * t)


def direct_cwt(x, scales, support=8.0):
    """T(a, b) = a^-1/2 sum_t x(t) psi((t - b) / a), summing every t with |(t-b)/a| <= support."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    t = np.arange(n, dtype=np.float64)
    out = np.zeros((len(scales), n))
    c = 2.0 / (math.sqrt(3.0) * math.pi ** 0.25)
    for i, a in enumerate(scales):
        arg = (t[None, :] - t[:, None]) / a  # rows b, columns t
        psi = c * np.exp(-arg ** 2 / 2.0) * (1.0 - arg ** 2)
        psi[np.abs(arg) > support] = 0.0
        out[i] = psi @ x / math.sqrt(a)
    return out


def conv2d_loops(x, w, b, stride, pad):
    """Quadruple (well, sextuple) loop cross-correlation over (N, C, H, W)."""
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, o, oh, ow))
    for s in range(n):
        for q in range(o):
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0 if b is None else b[q]
                    for p in range(c):
                        for m in range(kh):
                            for k in range(kw):
                                r, col = i * stride + m - pad, j * stride + k - pad
                                if 0 <= r < h and 0 <= col < wd:
                                    acc += x[s, p, r, col] * w[q, p, m, k]
                    out[s, q, i, j] = acc
    return out


def conv1d_loops(x, w, b, stride, pad):
    n, c, length = x.shape
    o, _, k = w.shape
    ol = (length + 2 * pad - k) // stride + 1
    out = np.zeros((n, o, ol))
    for s in range(n):
        for q in range(o):
            for i in range(ol):
                acc = 0.0 if b is None else b[q]
                for p in range(c):
                    for m in range(k):
                        j = i * stride + m - pad
                        if 0 <= j < length:
                            acc += x[s, p, j] * w[q, p, m]
                out[s, q, i] = acc
    return out


def maxpool_loops(x, k, stride, pad):
    n, c, h, w = x.shape
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    out = np.full((n, c, oh, ow), -np.inf)
    for s in range(n):
        for q in range(c):
            for i in range(oh):
                for j in range(ow):
                    for m in range(k):
                        for kk in range(k):
                            r, col = i * stride + m - pad, j * stride + kk - pad
                            if 0 <= r < h and 0 <= col < w:
                                out[s, q, i, j] = max(out[s, q, i, j], x[s, q, r, col])
    return out


def numeric_grad(f, x, h=1e-5):
    """Central differences of scalar ``f`` with respect to every entry of ``x`` (modified in place, restored)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    denom = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-12)
    return float(np.abs(a - b).max(initial=0.0) / denom)


def mann_whitney_auc(labels, scores):
    """Fraction of (positive, negative) pairs ranked correctly; ties count one half."""
    pos = [float(s) for y, s in zip(labels, scores) if y == 1]
    neg = [float(s) for y, s in zip(labels, scores) if y == 0]
    wins = Fraction(0)
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1
            elif p == q:
                wins += Fraction(1, 2)
    return float(wins / (len(pos) * len(neg)))


def auprc_enumerate(labels, scores):
    """Sum over distinct thresholds (descending) of recall gain times precision at that threshold."""
    # plain Python ints: numpy int64 would overflow inside Fraction arithmetic
    labels, scores = [int(y) for y in labels], [float(v) for v in scores]
    n_pos = sum(labels)
    total, prev_recall = Fraction(0), Fraction(0)
    for t in sorted(set(scores), reverse=True):
        tp = sum(1 for y, s in zip(labels, scores) if s >= t and y == 1)
        fp = sum(1 for y, s in zip(labels, scores) if s >= t and y == 0)
        recall = Fraction(tp, n_pos)
        precision = Fraction(tp, tp + fp)
        total += (recall - prev_recall) * precision
        prev_recall = recall
    return float(total)


def area_resize_loops(grid, height, width):
    """Each output cell is the overlap-weighted mean of the source cells it covers."""
    grid = np.asarray(grid, dtype=np.float64)
    h, w = grid.shape

    def weights(n_src, n_dst):
        rows = []
        for i in range(n_dst):
            lo, hi = Fraction(i * n_src, n_dst), Fraction((i + 1) * n_src, n_dst)
            rows.append([(k, float((min(hi, k + 1) - max(lo, k)) / (hi - lo)))
                         for k in range(n_src) if min(hi, k + 1) > max(lo, k)])
        return rows

    wr, wc = weights(h, height), weights(w, width)
    out = np.zeros((height, width))
    for i, rows in enumerate(wr):
        for j, cols in enumerate(wc):
            out[i, j] = sum(a * b * grid[r, c] for r, a in rows for c, b in cols)
    return out


def resnet18_param_count(in_channels=1, widths=(64, 128, 256, 512), n_branches=1):
    """Layer-by-layer arithmetic: bias-free convs, two affine params per batch-norm channel."""
    def conv(cin, cout, k):
        return cin * cout * k * k

    def bn(ch):
        return 2 * ch

    total = conv(in_channels, widths[0], 7) + bn(widths[0])
    c = widths[0]
    for stage, width in enumerate(widths):
        for block in range(2):
            cin = c if block == 0 else width
            total += conv(cin, width, 3) + bn(width) + conv(width, width, 3) + bn(width)
            if block == 0 and (stage > 0 or cin != width):
                total += conv(cin, width, 1) + bn(width)
        c = width
    trunk = total
    head = c * n_branches + n_branches
    return trunk, head
