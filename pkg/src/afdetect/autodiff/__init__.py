"""Minimal reverse-mode autodiff with the layers the AF classifiers need."""
from . import functional, kernels, ops
from .functional import (
    avg_pool1d,
    avg_pool2d,
    batch_norm,
    binary_cross_entropy,
    conv1d,
    conv2d,
    global_avg_pool,
    linear,
    max_pool1d,
    max_pool2d,
    relu,
    sigmoid,
)
from .optim import Adam, AdamState, adam_step
from .tensor import Tensor, as_tensor, backward, no_grad, set_finite_checks

__all__ = [
    "Adam", "AdamState", "Tensor", "adam_step", "as_tensor", "avg_pool1d", "avg_pool2d",
    "backward", "batch_norm", "binary_cross_entropy", "conv1d", "conv2d", "functional",
    "global_avg_pool", "kernels", "linear", "max_pool1d", "max_pool2d", "no_grad", "ops",
    "relu", "set_finite_checks", "sigmoid",
]
