import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from maskstereo.tensor import (
    LayerSpec,
    ShapeError,
    Tensor,
    UsageError,
    conv2d_backward,
    conv2d_forward,
    fully_connected_backward,
    fully_connected_forward,
    gradient_check,
    relu_backward,
    relu_forward,
    softmax,
    softmax_cross_entropy,
)


def conv_bruteforce(x, w, b):
    """Direct quadruple loop; independent of the im2col path."""
    kh, kw, cin, cout = w.shape
    h, wd, _ = x.shape
    out = np.zeros((h - kh + 1, wd - kw + 1, cout))
    for i in range(h - kh + 1):
        for j in range(wd - kw + 1):
            for o in range(cout):
                out[i, j, o] = np.sum(x[i:i + kh, j:j + kw, :] * w[:, :, :, o]) + b[o]
    return out


def ce_forward(z, target):
    loss, grad = softmax_cross_entropy(z, target)
    return np.array(loss), grad


class TestTensor:
    def test_dims_match_data(self):
        t = Tensor(np.zeros((2, 3, 4)))
        assert t.dims == (2, 3, 4)
        assert np.prod(t.dims) == t.data.size

    def test_grad_shape_must_match(self):
        with pytest.raises(ShapeError):
            Tensor(np.zeros((2, 3)), grad=np.zeros((3, 2)))

    def test_zero_dim_rejected(self):
        with pytest.raises(ShapeError):
            Tensor(np.zeros((0, 3)))

    def test_precision_modes(self):
        t = Tensor.zeros((2, 2))
        assert t.data.dtype == np.float32
        assert t.astype(np.float64).data.dtype == np.float64


class TestLayerSpec:
    def test_kernel_sizes_restricted(self):
        LayerSpec("conv", 4, 32, (5, 5))
        LayerSpec("conv", 256, 256, (4, 4))
        with pytest.raises(ShapeError):
            LayerSpec("conv", 4, 32, (3, 3))

    def test_stride_and_padding_fixed(self):
        s = LayerSpec("conv", 4, 32, (5, 5))
        assert (s.stride, s.padding) == (1, 0)
        assert s.output_hw(36, 36) == (32, 32)


class TestConv:
    def test_first_and_last_trunk_layers(self):
        out, _ = conv2d_forward(np.zeros((36, 36, 4)), np.zeros((5, 5, 4, 32)), np.zeros(32))
        assert out.shape == (32, 32, 32)
        out, _ = conv2d_forward(np.zeros((4, 4, 256)), np.zeros((4, 4, 256, 256)), np.zeros(256))
        assert out.shape == (1, 1, 256)

    def test_zero_input_gives_bias(self):
        rng = np.random.default_rng(1)
        b = rng.standard_normal(6)
        out, _ = conv2d_forward(np.zeros((9, 7, 3)), rng.standard_normal((4, 4, 3, 6)), b)
        assert np.array_equal(out, np.broadcast_to(b, out.shape))

    @pytest.mark.parametrize("k", [3, 4, 5])
    def test_matches_bruteforce(self, k):
        rng = np.random.default_rng(k)
        x = rng.standard_normal((9, 11, 3))
        w = rng.standard_normal((k, k, 3, 4))
        b = rng.standard_normal(4)
        out, _ = conv2d_forward(x, w, b)
        np.testing.assert_allclose(out, conv_bruteforce(x, w, b), rtol=1e-12, atol=1e-12)

    def test_batch_axis_matches_single(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((3, 8, 8, 2))
        w, b = rng.standard_normal((5, 5, 2, 3)), rng.standard_normal(3)
        batched, _ = conv2d_forward(x, w, b)
        for n in range(3):
            np.testing.assert_allclose(batched[n], conv2d_forward(x[n], w, b)[0], atol=1e-12)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            conv2d_forward(np.zeros((8, 8, 3)), np.zeros((5, 5, 4, 2)), np.zeros(2))

    def test_input_smaller_than_kernel(self):
        with pytest.raises(ShapeError):
            conv2d_forward(np.zeros((4, 8, 4)), np.zeros((5, 5, 4, 2)), np.zeros(2))

    def test_scalar_chain_rule(self):
        x = np.array([[[3.0]]])
        w = np.array([[[[2.0]]]])
        _, cache = conv2d_forward(x, w, np.zeros(1))
        dx, dw, db = conv2d_backward(np.array([[[0.5]]]), cache)
        assert dw.item() == pytest.approx(3.0 * 0.5)
        assert dx.item() == pytest.approx(2.0 * 0.5)
        assert db.item() == pytest.approx(0.5)

    def test_zero_upstream_grad(self):
        rng = np.random.default_rng(3)
        out, cache = conv2d_forward(rng.standard_normal((8, 8, 2)), rng.standard_normal((3, 3, 2, 4)), np.zeros(4))
        for g in conv2d_backward(np.zeros_like(out), cache):
            assert not np.any(g)

    def test_backward_needs_cache(self):
        with pytest.raises(UsageError):
            conv2d_backward(np.zeros((4, 4, 2)), None)

    def test_gradcheck_8x8x2_3x3(self):
        rng = np.random.default_rng(0)
        rep = gradient_check(conv2d_forward, conv2d_backward,
                             [rng.standard_normal((8, 8, 2)), rng.standard_normal((3, 3, 2, 3)),
                              rng.standard_normal(3)], rng=rng, name="conv3x3")
        assert rep.passed, rep


class TestFullyConnected:
    @pytest.mark.parametrize("din", [256, 512])
    def test_head_widths(self, din):
        out, _ = fully_connected_forward(np.ones((1, din)), np.zeros((din, 128)), np.zeros(128))
        assert out.shape == (1, 128)

    def test_identity(self):
        x = np.arange(5.0)[None]
        out, _ = fully_connected_forward(x, np.eye(5), np.zeros(5))
        np.testing.assert_array_equal(out, x)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            fully_connected_forward(np.ones((1, 7)), np.zeros((8, 2)), np.zeros(2))

    def test_gradcheck_1x16(self):
        rng = np.random.default_rng(4)
        rep = gradient_check(fully_connected_forward, fully_connected_backward,
                             [rng.standard_normal((1, 16)), rng.standard_normal((16, 5)), rng.standard_normal(5)],
                             rng=rng)
        assert rep.passed, rep

    def test_corrupted_gradient_fails(self):
        rng = np.random.default_rng(4)
        rep = gradient_check(fully_connected_forward, fully_connected_backward,
                             [rng.standard_normal((1, 16)), rng.standard_normal((16, 5)), rng.standard_normal(5)],
                             rng=rng, corrupt=0.1)
        assert not rep.passed


class TestRelu:
    def test_values(self):
        out, _ = relu_forward(np.array([-1.0, 0.0, 2.0]))
        np.testing.assert_array_equal(out, [0.0, 0.0, 2.0])

    def test_backward_negative(self):
        _, mask = relu_forward(np.array([-1.0]))
        assert relu_backward(np.array([5.0]), mask)[0] == 0.0

    def test_gradcheck_away_from_zero(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((6, 7))
        x[np.abs(x) < 1e-2] = 0.5
        rep = gradient_check(relu_forward, lambda g, c: [relu_backward(g, c)], [x], rng=rng)
        assert rep.passed, rep


class TestSoftmaxCrossEntropy:
    def test_uniform(self):
        loss, _ = softmax_cross_entropy(np.array([[0.0, 0.0]]), 1)
        assert loss == pytest.approx(np.log(2))

    def test_no_overflow(self):
        loss, grad = softmax_cross_entropy(np.array([[-1000.0, 1000.0]]), 1)
        assert loss == pytest.approx(0.0, abs=1e-12)
        assert np.all(np.isfinite(grad))

    def test_bad_target(self):
        with pytest.raises(ValueError):
            softmax_cross_entropy(np.array([[0.0, 1.0]]), 2)

    def test_needs_two_logits(self):
        with pytest.raises(ShapeError):
            softmax_cross_entropy(np.zeros((1, 3)), 1)

    def test_gradcheck(self):
        rng = np.random.default_rng(6)
        rep = gradient_check(lambda z: ce_forward(z, 0), lambda r, g: [r * g],
                             [rng.standard_normal((1, 2)) * 3], rng=rng)
        assert rep.passed, rep

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (4, 2), elements=st.floats(-15, 15)))
    def test_softmax_is_distribution(self, z):
        p = softmax(z)
        assert np.all(p > 0) and np.all(p < 1)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)


def test_forward_is_deterministic():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((12, 12, 4)).astype(np.float32)
    w = rng.standard_normal((5, 5, 4, 8)).astype(np.float32)
    b = rng.standard_normal(8).astype(np.float32)
    a1, _ = conv2d_forward(x, w, b)
    a2, _ = conv2d_forward(x.copy(), w.copy(), b.copy())
    assert a1.tobytes() == a2.tobytes()
