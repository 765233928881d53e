"""Kernel dispatch: the compiled extension when importable, numpy otherwise.

Set ``AFDETECT_PURE_PYTHON=1`` to force the numpy kernels at import time, or
call :func:`use_backend` at runtime.
"""
import os

from . import _pykernels

try:
    if os.environ.get("AFDETECT_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python kernels requested")
    from . import _ckernels
except ImportError:
    _ckernels = None

_impl = _ckernels if _ckernels is not None else _pykernels
BACKEND = "cython" if _impl is _ckernels else "python"


def available_backends():
    return ["python"] + (["cython"] if _ckernels is not None else [])


def use_backend(name: str) -> str:
    """Switch kernels; returns the previously active backend name."""
    global _impl, BACKEND
    if name == "cython":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        impl = _ckernels
    elif name == "python":
        impl = _pykernels
    else:
        raise ValueError(f"unknown backend {name!r}")
    prev, _impl, BACKEND = BACKEND, impl, name
    return prev


def im2col(xp, kh, kw, sh, sw):
    return _impl.im2col(xp, kh, kw, sh, sw)


def col2im(cols, n, c, hp, wp, kh, kw, sh, sw):
    return _impl.col2im(cols, n, c, hp, wp, kh, kw, sh, sw)


def maxpool_forward(xp, kh, kw, sh, sw):
    return _impl.maxpool_forward(xp, kh, kw, sh, sw)


def maxpool_backward(g, arg, hp, wp, kh, kw, sh, sw):
    return _impl.maxpool_backward(g, arg, hp, wp, kh, kw, sh, sw)
