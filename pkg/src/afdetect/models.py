"""ResNet18 over scalograms, the 1D-CNN baseline, and the multi-branching head.

Every network ends in a shared feature vector followed by an :class:`MbHead`
whose ``N_b`` rows are independent fully-connected branches, so a network
returns an ``(N, N_b)`` array of per-branch AF probabilities.  With
``N_b == 1`` this is an ordinary single-output classifier.
"""
from __future__ import annotations

import math

import numpy as np

from .autodiff import functional as F
from .autodiff.ops import flatten
from .autodiff.tensor import Tensor, as_tensor
from .errors import EmptyBranches, MembershipMismatch, ShapeMismatch

RESNET18_WIDTHS = (64, 128, 256, 512)
CNN1D_CHANNELS = (16, 32, 64)
CNN1D_KERNELS = (7, 5, 3)
PROB_EPS = 1e-7


class Module:
    """Attribute-walking container: Tensor attributes that require grad are
    parameters, numpy attributes named in ``_buffers`` are buffers."""

    training = True
    _buffers = ()

    def children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def parameters(self, prefix="") -> dict:
        out = {}
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                out[prefix + name] = value
        for name, child in self.children():
            out.update(child.parameters(f"{prefix}{name}."))
        return out

    def buffers(self, prefix="") -> dict:
        out = {prefix + name: getattr(self, name) for name in self._buffers}
        for name, child in self.children():
            out.update(child.buffers(f"{prefix}{name}."))
        return out

    def train(self, mode=True):
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters().values():
            p.grad = None

    def astype(self, dtype):
        for p in self.parameters().values():
            p.data = p.data.astype(dtype)
        self._cast_buffers(dtype)
        return self

    def _cast_buffers(self, dtype):
        for name in self._buffers:
            setattr(self, name, getattr(self, name).astype(dtype))
        for _, child in self.children():
            child._cast_buffers(dtype)

    def state_dict(self) -> dict:
        state = {f"param/{k}": v.data for k, v in self.parameters().items()}
        state.update({f"buffer/{k}": v for k, v in self.buffers().items()})
        return state

    def load_state_dict(self, state: dict) -> None:
        params, buffers = self.parameters(), self.buffers()
        expected = {f"param/{k}" for k in params} | {f"buffer/{k}" for k in buffers}
        present = {k for k in state if k.startswith(("param/", "buffer/"))}
        if expected != present:
            raise ShapeMismatch(f"state mismatch: missing {sorted(expected - present)[:5]}, "
                                f"unexpected {sorted(present - expected)[:5]}")
        for k, p in params.items():
            src = state[f"param/{k}"]
            if src.shape != p.shape:
                raise ShapeMismatch(f"{k}: stored shape {src.shape} != model shape {p.shape}")
            p.data = np.array(src, dtype=p.dtype)
        for k, buf in buffers.items():
            src = state[f"buffer/{k}"]
            if src.shape != buf.shape:
                raise ShapeMismatch(f"{k}: stored shape {src.shape} != model shape {buf.shape}")
            buf[...] = src

    def __call__(self, x):
        return self.forward(x)


def _param(*shape):
    return Tensor(np.zeros(shape), requires_grad=True)


class Conv2d(Module):
    def __init__(self, c_in, c_out, k, stride=1, padding=0, bias=False):
        self.weight = _param(c_out, c_in, k, k)
        self.bias = _param(c_out) if bias else None
        self.stride, self.padding = stride, padding

    def forward(self, x):
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Conv1d(Module):
    def __init__(self, c_in, c_out, k, stride=1, padding=0, bias=True):
        self.weight = _param(c_out, c_in, k)
        self.bias = _param(c_out) if bias else None
        self.stride, self.padding = stride, padding

    def forward(self, x):
        return F.conv1d(x, self.weight, self.bias, self.stride, self.padding)


class BatchNorm(Module):
    _buffers = ("running_mean", "running_var")

    def __init__(self, channels, momentum=0.1, eps=1e-5):
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = _param(channels)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum, self.eps = momentum, eps

    def forward(self, x):
        return F.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                            self.training, self.momentum, self.eps)


class Linear(Module):
    def __init__(self, f_in, f_out):
        self.weight = _param(f_out, f_in)
        self.bias = _param(f_out)

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)


class ResidualBlock(Module):
    """``Y = relu(F(X) + shortcut(X))`` with ``F`` = conv-bn-relu-conv-bn."""

    def __init__(self, c_in, c_out, stride=1):
        self.conv1 = Conv2d(c_in, c_out, 3, stride, 1)
        self.bn1 = BatchNorm(c_out)
        self.conv2 = Conv2d(c_out, c_out, 3, 1, 1)
        self.bn2 = BatchNorm(c_out)
        if stride != 1 or c_in != c_out:
            self.proj = Conv2d(c_in, c_out, 1, stride, 0)
            self.proj_bn = BatchNorm(c_out)
        else:
            self.proj = self.proj_bn = None

    def residual(self, x):
        return self.bn2(self.conv2(F.relu(self.bn1(self.conv1(x)))))

    def shortcut(self, x):
        if self.proj is None:
            return x
        return self.proj_bn(self.proj(x))

    def forward(self, x):
        return F.relu(self.residual(x) + self.shortcut(x))


class MbHead(Module):
    """``N_b`` parallel dense branches sharing one feature vector; row ``i`` of
    the weight matrix is branch ``i``."""

    def __init__(self, features, n_branches=1):
        if n_branches < 1:
            raise EmptyBranches("need at least one branch")
        self.fc = Linear(features, n_branches)
        self.n_branches = n_branches

    def forward(self, features):
        return F.sigmoid(self.fc(features))


class ResNet18(Module):
    def __init__(self, in_channels=1, widths=RESNET18_WIDTHS, n_branches=1, input_shape=(128, 128)):
        self.in_channels, self.widths = in_channels, tuple(widths)
        self.input_shape = tuple(input_shape)
        self.stem = Conv2d(in_channels, widths[0], 7, 2, 3)
        self.stem_bn = BatchNorm(widths[0])
        blocks, c = [], widths[0]
        for stage, width in enumerate(widths):
            stride = 1 if stage == 0 else 2
            blocks.append(ResidualBlock(c, width, stride))
            blocks.append(ResidualBlock(width, width, 1))
            c = width
        self.blocks = blocks
        self.head = MbHead(c, n_branches)

    @property
    def n_branches(self):
        return self.head.n_branches

    def features(self, x):
        x = as_tensor(x)
        if x.ndim != 4 or x.shape[1] != self.in_channels or x.shape[2:] != self.input_shape:
            raise ShapeMismatch(f"ResNet18 expects (batch, {self.in_channels}, "
                                f"{self.input_shape[0]}, {self.input_shape[1]}), got {x.shape}")
        x = F.relu(self.stem_bn(self.stem(x)))
        x = F.max_pool2d(x, 3, 2, 1)
        for block in self.blocks:
            x = block(x)
        return F.global_avg_pool(x)

    def forward(self, x):
        return self.head(self.features(x))

    def descriptor(self):
        return {"kind": "resnet18", "in_channels": self.in_channels, "widths": list(self.widths),
                "n_branches": self.n_branches, "input_shape": list(self.input_shape)}


class Cnn1d(Module):
    """Three conv-relu-maxpool stages, one batch norm, one dense output layer."""

    def __init__(self, in_channels=1, channels=CNN1D_CHANNELS, kernels=CNN1D_KERNELS, pool=2,
                 n_branches=1, input_length=3000):
        self.in_channels, self.channels, self.kernels = in_channels, tuple(channels), tuple(kernels)
        self.pool, self.input_length = pool, input_length
        convs, c, length = [], in_channels, input_length
        for width, k in zip(channels, kernels):
            convs.append(Conv1d(c, width, k, 1, k // 2))
            c = width
            length = (length + 2 * (k // 2) - k + 1) // pool
        if length < 1:
            raise ShapeMismatch(f"input length {input_length} too short for three pooling stages")
        self.convs = convs
        self.bn = BatchNorm(c)
        self.head = MbHead(c * length, n_branches)

    @property
    def n_branches(self):
        return self.head.n_branches

    def features(self, x):
        x = as_tensor(x)
        if x.ndim != 3 or x.shape[1] != self.in_channels or x.shape[2] != self.input_length:
            raise ShapeMismatch(f"Cnn1d expects (batch, {self.in_channels}, {self.input_length}), got {x.shape}")
        for conv in self.convs:
            x = F.max_pool1d(F.relu(conv(x)), self.pool)
        return flatten(self.bn(x))

    def forward(self, x):
        return self.head(self.features(x))

    def descriptor(self):
        return {"kind": "cnn1d", "in_channels": self.in_channels, "channels": list(self.channels),
                "kernels": list(self.kernels), "pool": self.pool, "n_branches": self.n_branches,
                "input_length": self.input_length}


def build_model(descriptor: dict) -> Module:
    d = dict(descriptor)
    kind = d.pop("kind")
    if kind == "resnet18":
        return ResNet18(d["in_channels"], tuple(d["widths"]), d["n_branches"], tuple(d["input_shape"]))
    if kind == "cnn1d":
        return Cnn1d(d["in_channels"], tuple(d["channels"]), tuple(d["kernels"]), d["pool"],
                     d["n_branches"], d["input_length"])
    raise ValueError(f"unknown architecture {kind!r}")


def init_parameters(model: Module, seed: int = 0) -> Module:
    """He-uniform weights for layers feeding a ReLU, LeCun-uniform for dense
    layers, zero biases, unit batch-norm scale.  Deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    for name, p in sorted(model.parameters().items()):
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "gamma":
            p.data = np.ones(p.shape, dtype=p.dtype)
        elif leaf in ("beta", "bias"):
            p.data = np.zeros(p.shape, dtype=p.dtype)
        else:
            fan_in = int(np.prod(p.shape[1:]))
            gain = 6.0 if p.ndim > 2 else 3.0
            bound = math.sqrt(gain / fan_in)
            p.data = rng.uniform(-bound, bound, size=p.shape).astype(p.dtype)
    return model


def mb_loss(pred, labels, membership, eps=PROB_EPS, reduction="sum"):
    """Branch-indicator weighted binary cross-entropy.

    ``pred`` is ``(N, N_b)`` branch probabilities, ``labels`` is ``(N,)`` in
    {0, 1}, ``membership[j, i]`` says whether sample ``j`` belongs to branch
    dataset ``i``.
    """
    pred = as_tensor(pred)
    if pred.ndim == 1:
        pred = pred.reshape(-1, 1)
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    membership = np.asarray(membership, dtype=bool)
    if membership.ndim == 1:
        membership = membership.reshape(-1, 1)
    if membership.shape != pred.shape or labels.shape[0] != pred.shape[0]:
        raise ShapeMismatch(f"pred {pred.shape}, labels {labels.shape}, membership {membership.shape} disagree")
    if not membership.any(axis=1).all():
        raise MembershipMismatch("every sample must belong to at least one branch dataset")
    return F.binary_cross_entropy(pred, labels[:, None], membership, eps, reduction)


def mb_predict(branch_probs):
    """Average branch probabilities (last axis)."""
    p = np.asarray(getattr(branch_probs, "data", branch_probs), dtype=np.float64)
    if p.size == 0 or p.shape[-1] == 0:
        raise EmptyBranches("no branch outputs to average")
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("branch outputs must be probabilities")
    return p.mean(axis=-1)


def count_parameters(model: Module, include=lambda name: True) -> int:
    return int(sum(p.size for name, p in model.parameters().items() if include(name)))
