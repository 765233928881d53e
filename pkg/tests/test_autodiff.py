import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afdetect.autodiff import (
    Adam,
    AdamState,
    Tensor,
    adam_step,
    backward,
    checkpoint,
    functional as F,
    kernels,
    no_grad,
    ops,
)
from afdetect.autodiff import _pykernels
from afdetect.errors import CheckpointError, GraphConsumed, NotScalar, ShapeMismatch
from oracles import conv1d_loops, conv2d_loops, maxpool_loops
from primitive_cases import PRIMITIVES, gradcheck


# -- forward examples ------------------------------------------------------


def test_conv2d_scalar_product(backend):
    out = F.conv2d(np.array([[[5.0]]]), np.array([[[[2.0]]]]), np.zeros(1))
    assert out.data.tolist() == [[[10.0]]]


def test_conv2d_ones(backend):
    out = F.conv2d(np.ones((1, 3, 3)), np.ones((1, 1, 3, 3)), np.ones(1))
    assert out.data.item() == 10.0


def test_conv2d_random_vs_loops(backend, rng):
    x, w, b = rng.standard_normal((1, 2, 5, 5)), rng.standard_normal((3, 2, 3, 3)), rng.standard_normal(3)
    np.testing.assert_allclose(F.conv2d(x, w, b, 1, 1).data, conv2d_loops(x, w, b, 1, 1), rtol=0, atol=1e-12)


@pytest.mark.parametrize("stride", [1, 2])
@pytest.mark.parametrize("pad", [0, 1, 3])
@pytest.mark.parametrize("k", [1, 3, 7])
def test_conv2d_grid_vs_loops(backend, stride, pad, k):
    rng = np.random.default_rng(stride * 100 + pad * 10 + k)
    size = max(k, 5)
    x, w = rng.standard_normal((2, 2, size, size + 1)), rng.standard_normal((2, 2, k, k))
    np.testing.assert_allclose(F.conv2d(x, w, None, stride, pad).data, conv2d_loops(x, w, None, stride, pad),
                               rtol=0, atol=1e-12)


@pytest.mark.parametrize("stride", [1, 2])
@pytest.mark.parametrize("pad", [0, 1, 3])
@pytest.mark.parametrize("k", [1, 3, 7])
def test_conv1d_grid_vs_loops(backend, stride, pad, k):
    rng = np.random.default_rng(stride * 100 + pad * 10 + k)
    x, w, b = rng.standard_normal((2, 3, 11)), rng.standard_normal((2, 3, k)), rng.standard_normal(2)
    np.testing.assert_allclose(F.conv1d(x, w, b, stride, pad).data, conv1d_loops(x, w, b, stride, pad),
                               rtol=0, atol=1e-12)


def test_conv1d_identity_kernel(rng):
    x = rng.standard_normal((1, 9))
    np.testing.assert_array_equal(F.conv1d(x, np.ones((1, 1, 1))).data, x)


def test_conv1d_hand_sum():
    assert F.conv1d(np.array([[1.0, 2.0, 3.0]]), np.ones((1, 1, 2))).data.tolist() == [[3.0, 5.0]]


def test_conv_channel_mismatch():
    with pytest.raises(ShapeMismatch):
        F.conv2d(np.ones((1, 2, 4, 4)), np.ones((1, 3, 3, 3)))
    with pytest.raises(ShapeMismatch):
        F.conv2d(np.ones((1, 1, 2, 2)), np.ones((1, 1, 3, 3)))


def test_relu_sigmoid_examples():
    assert F.relu(np.array([-1.0, 0.0, 2.0])).data.tolist() == [0.0, 0.0, 2.0]
    assert F.sigmoid(np.array(0.0)).data.item() == 0.5
    big = F.sigmoid(np.array([-800.0, 800.0])).data
    assert np.isfinite(big).all() and big[0] == 0.0 and big[1] == 1.0


def test_batch_norm_hand_case():
    out = F.batch_norm(np.array([[1.0], [3.0]]), training=True)
    np.testing.assert_allclose(out.data.ravel(), [-1.0, 1.0], atol=1e-5)


def test_batch_norm_running_stats():
    rm, rv = np.zeros(1), np.ones(1)
    F.batch_norm(np.array([[1.0], [3.0], [5.0]]), running_mean=rm, running_var=rv, training=True)
    assert rm[0] == pytest.approx(0.1 * 3.0)
    assert rv[0] == pytest.approx(0.9 + 0.1 * 4.0)  # unbiased variance of {1,3,5} is 4
    out = F.batch_norm(np.array([[3.0]]), running_mean=rm, running_var=rv, training=False)
    assert out.data.item() == pytest.approx((3.0 - rm[0]) / np.sqrt(rv[0] + 1e-5))


def test_linear_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        F.linear(np.ones((2, 3)), np.ones((4, 2)))


def test_max_pool_vs_loops(backend, rng):
    x = rng.standard_normal((2, 3, 9, 8))
    np.testing.assert_array_equal(F.max_pool2d(x, 3, 2, 1).data, maxpool_loops(x, 3, 2, 1))


def test_max_pool_ties_go_to_first(backend):
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    backward(ops.sum(F.max_pool2d(x, 2)))
    assert x.grad.tolist() == [[[[1.0, 0.0], [0.0, 0.0]]]]


def test_max_pool_grad_only_at_argmax(backend, rng):
    x = Tensor(rng.permutation(36).reshape(1, 1, 6, 6).astype(float), requires_grad=True)
    backward(ops.sum(F.max_pool2d(x, 2)))
    flat = x.data.reshape(3, 2, 3, 2).transpose(0, 2, 1, 3).reshape(9, 4)
    winners = flat.max(axis=1)
    assert x.grad.sum() == 9
    assert set(x.data[x.grad == 1].tolist()) == set(winners.tolist())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 3), st.integers(1, 3))
def test_avg_pool_conserves_mass(seed, k, s):
    rng = np.random.default_rng(seed)
    s = min(s, k)
    x = Tensor(rng.standard_normal((2, 2, k + 4, k + 3)), requires_grad=True)
    out = F.avg_pool2d(x, k, s)
    g = rng.standard_normal(out.shape)
    backward(ops.sum(ops.mul(out, Tensor(g))))
    # each output cell spreads its gradient evenly over k*k inputs
    assert x.grad.sum() == pytest.approx(g.sum(), rel=1e-12, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_max_pool_conserves_mass(seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.standard_normal((1, 2, 7, 7)), requires_grad=True)
    out = F.max_pool2d(x, 3, 2, 1)
    g = rng.standard_normal(out.shape)
    backward(ops.sum(ops.mul(out, Tensor(g))))
    assert x.grad.sum() == pytest.approx(g.sum(), rel=1e-12, abs=1e-12)


# -- gradients -------------------------------------------------------------


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradcheck(name):
    rng = np.random.default_rng(99)
    assert max(gradcheck(name, rng) for _ in range(10)) < 1e-5


def test_sum_grad_is_ones():
    x = Tensor(np.zeros((2, 3, 4)), requires_grad=True)
    backward(x.sum())
    np.testing.assert_array_equal(x.grad, 1.0)


def test_square_grad():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    backward((x * x).sum())
    assert x.grad.tolist() == [2.0, 4.0]


def test_not_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(NotScalar):
        backward(x * 2.0)


def test_graph_consumed_once():
    x = Tensor(np.ones(3), requires_grad=True)
    loss = (x * 3.0).sum()
    backward(loss)
    with pytest.raises(GraphConsumed):
        backward(loss)


def test_shared_subexpression_accumulates():
    x = Tensor(np.array([2.0]), requires_grad=True)
    y = x * x
    backward((y + y * x).sum())  # d/dx (x^2 + x^3) = 2x + 3x^2
    assert x.grad.item() == pytest.approx(2 * 2 + 3 * 4)


def test_no_grad_records_nothing():
    x = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        y = (x * 2).sum()
    assert y.is_leaf
    with pytest.raises(NotScalar):
        backward(y)


def test_non_finite_rejected():
    with pytest.raises(FloatingPointError):
        ops.log(Tensor(np.array([-1.0])))


def test_forward_is_bit_deterministic(rng):
    x, w = rng.standard_normal((2, 3, 8, 8)), rng.standard_normal((4, 3, 3, 3))
    a = F.conv2d(x, w, None, 1, 1).data
    b = F.conv2d(x.copy(), w.copy(), None, 1, 1).data
    assert a.tobytes() == b.tobytes()


def test_float32_mode_close_to_reference(rng):
    x, w = rng.standard_normal((2, 3, 16, 16)), rng.standard_normal((4, 3, 3, 3))
    ref = F.max_pool2d(F.relu(F.conv2d(x, w, None, 1, 1)), 2).data
    fast = F.max_pool2d(F.relu(F.conv2d(x.astype(np.float32), w.astype(np.float32), None, 1, 1)), 2).data
    assert fast.dtype == np.float32
    assert np.abs(fast - ref).max() <= 1e-3 * np.abs(ref).max()


# -- compiled vs numpy kernels ----------------------------------------------

needs_cython = pytest.mark.skipif("cython" not in kernels.available_backends(),
                                  reason="compiled kernels not built")


@needs_cython
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_backends_agree(dtype):
    from afdetect.autodiff import _ckernels

    rng = np.random.default_rng(3)
    # overlapping windows accumulate in different orders, so allow rounding
    tol = dict(rtol=1e-12, atol=1e-12) if dtype == np.float64 else dict(rtol=1e-5, atol=1e-5)
    for kh, kw, sh, sw in [(3, 3, 1, 1), (7, 7, 2, 2), (1, 1, 2, 2), (2, 3, 1, 2)]:
        xp = rng.standard_normal((2, 3, 11, 12)).astype(dtype)
        a = _pykernels.im2col(xp, kh, kw, sh, sw)
        b = _ckernels.im2col(xp, kh, kw, sh, sw)
        assert a.dtype == b.dtype and np.array_equal(a, b)
        cols = rng.standard_normal(a.shape).astype(dtype)
        np.testing.assert_allclose(_ckernels.col2im(cols, 2, 3, 11, 12, kh, kw, sh, sw),
                                   _pykernels.col2im(cols, 2, 3, 11, 12, kh, kw, sh, sw), **tol)
        xp = np.round(xp * 2) / 2  # plenty of ties
        oa, ga = _pykernels.maxpool_forward(xp, kh, kw, sh, sw)
        ob, gb = _ckernels.maxpool_forward(xp, kh, kw, sh, sw)
        assert np.array_equal(oa, ob) and np.array_equal(ga, gb)
        g = rng.standard_normal(oa.shape).astype(dtype)
        np.testing.assert_allclose(_ckernels.maxpool_backward(g, ga, 11, 12, kh, kw, sh, sw),
                                   _pykernels.maxpool_backward(g, ga, 11, 12, kh, kw, sh, sw), **tol)


@needs_cython
def test_compiled_accepts_read_only_views():
    from afdetect.autodiff import _ckernels

    cols = np.broadcast_to(np.ones((1, 16)), (1, 16))
    assert not cols.flags.writeable
    out = _ckernels.col2im(cols, 1, 1, 4, 4, 1, 1, 1, 1)
    np.testing.assert_array_equal(out, 1.0)


def test_backend_switch_round_trip():
    prev = kernels.use_backend("python")
    try:
        assert kernels.BACKEND == "python"
    finally:
        kernels.use_backend(prev)
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")


# -- Adam ------------------------------------------------------------------


def test_adam_zero_grad_no_move():
    p = {"w": np.array([1.0, -2.0])}
    st_ = AdamState()
    adam_step(p, {"w": np.zeros(2)}, st_)
    assert p["w"].tolist() == [1.0, -2.0] and st_.step == 1


def test_adam_first_step():
    p = {"w": np.array([0.0])}
    adam_step(p, {"w": np.array([1.0])}, AdamState())
    assert p["w"][0] == pytest.approx(-1e-3 / (1 + 1e-8), rel=1e-15)
    assert p["w"][0] == pytest.approx(-0.000999999990, abs=1e-15)


def test_adam_matches_hand_recurrence(rng):
    grads = rng.standard_normal((5, 3))
    p, st_ = {"w": np.zeros(3)}, AdamState(lr=0.01)
    m = v = np.zeros(3)
    w = np.zeros(3)
    for t, g in enumerate(grads, 1):
        adam_step(p, {"w": g}, st_)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w = w - 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(p["w"], w, rtol=1e-13)
    assert (st_.v["w"] >= 0).all()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 20))
def test_adam_twins_stay_identical(seed, steps):
    rng = np.random.default_rng(seed)
    start = rng.standard_normal(4)
    p = {"a": start.copy(), "b": start.copy()}
    s = AdamState()
    for _ in range(steps):
        g = rng.standard_normal(4)
        adam_step(p, {"a": g, "b": g.copy()}, s)
    assert p["a"].tobytes() == p["b"].tobytes()


def test_adam_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState())


def test_adam_wrapper_descends():
    w = Tensor(np.array([3.0, -2.0]), requires_grad=True)
    opt = Adam({"w": w}, lr=0.1)
    for _ in range(200):
        opt.zero_grad()
        backward((w * w).sum())
        opt.step()
    assert np.abs(w.data).max() < 0.05


# -- checkpoint container ---------------------------------------------------


def test_checkpoint_round_trip(tmp_path, rng):
    tensors = {"b": rng.standard_normal((2, 3)), "a": np.arange(4.0), "s": np.array(1.5)}
    checkpoint.save(tmp_path / "c.ckpt", tensors, {"kind": "demo"})
    back, meta = checkpoint.load(tmp_path / "c.ckpt")
    assert meta == {"kind": "demo"}
    for k, v in tensors.items():
        assert back[k].shape == v.shape and np.array_equal(back[k], v)


def test_checkpoint_layout(rng):
    raw = checkpoint.encode({"x": np.array([1.0, 2.0])}, {})
    assert raw[:8] == b"AFDCKPT\0"
    version, hlen = struct.unpack("<IQ", raw[8:20])
    assert version == 1
    payload = raw[20 + hlen:]
    assert np.frombuffer(payload, "<f8").tolist() == [1.0, 2.0]


def test_checkpoint_is_canonical():
    a = checkpoint.encode({"x": np.ones(2), "y": np.zeros(1)}, {"k": 1, "j": 2})
    b = checkpoint.encode({"y": np.zeros(1), "x": np.ones(2)}, {"j": 2, "k": 1})
    assert a == b


def test_checkpoint_rejects_garbage():
    with pytest.raises(CheckpointError):
        checkpoint.decode(b"not a checkpoint at all")
    raw = bytearray(checkpoint.encode({"x": np.ones(2)}))
    raw[8] = 9
    with pytest.raises(CheckpointError):
        checkpoint.decode(bytes(raw))
    with pytest.raises(CheckpointError):
        checkpoint.decode(checkpoint.encode({"x": np.ones(4)})[:-8])
