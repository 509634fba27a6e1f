import numpy as np
import pytest

from vigil.errors import ShapeError
from vigil.tensor import (
    ConvKernel,
    activation,
    as_tensor,
    batchnorm_infer,
    concat_channels,
    conv2d,
    conv2d_reference,
    depthwise_conv2d,
    deterministic_mode,
    elementwise,
    expand_separable,
    is_deterministic,
    maxpool2d,
    maxpool2d_reference,
    pointwise_conv2d,
    relu6,
    separable_conv2d,
    sigmoid,
)
from vigil.tooling import compare_conv_cost


def _delta(k: int, channels: int) -> np.ndarray:
    w = np.zeros((k, k, channels))
    w[k // 2, k // 2, :] = 1.0
    return w


# ── Tensor value type ────────────────────────────────────────────────────────

def test_as_tensor_rejects_bad_rank_and_zero_extent():
    with pytest.raises(ShapeError):
        as_tensor(np.zeros((1, 1, 1, 1, 1)))
    with pytest.raises(ShapeError):
        as_tensor(np.zeros((0, 3)))


def test_as_tensor_casts_integers_to_f32():
    t = as_tensor([[1, 2], [3, 4]])
    assert t.dtype == np.float32
    assert t.flags.c_contiguous


# ── conv2d ───────────────────────────────────────────────────────────────────

def test_conv2d_scalar_product():
    out = conv2d(np.array([[[5.0]]]), ConvKernel("standard", np.full((1, 1, 1, 1), 3.0)))
    assert out.shape == (1, 1, 1)
    assert out[0, 0, 0] == 15.0


def test_conv2d_valid_window_sum():
    out = conv2d(np.ones((3, 3, 1)), ConvKernel("standard", np.ones((3, 3, 1, 1)), padding="valid"))
    np.testing.assert_array_equal(out, [[[9.0]]])


@pytest.mark.parametrize("stride", [1, 2])
@pytest.mark.parametrize("padding", ["same", "valid"])
def test_conv2d_matches_naive_loops(rng, stride, padding):
    x = rng.standard_normal((7, 7, 4))
    k = ConvKernel("standard", rng.standard_normal((3, 3, 4, 8)), rng.standard_normal(8), stride, padding)
    np.testing.assert_allclose(conv2d(x, k), conv2d_reference(x, k), rtol=1e-10, atol=1e-12)


def test_conv2d_output_sizes(rng):
    x = rng.standard_normal((9, 9, 2))
    w = rng.standard_normal((3, 3, 2, 5))
    assert conv2d(x, ConvKernel("standard", w)).shape == (9, 9, 5)
    assert conv2d(x, ConvKernel("standard", w, padding="valid")).shape == (7, 7, 5)
    assert conv2d(x, ConvKernel("standard", w, stride=2)).shape == (5, 5, 5)


def test_conv2d_is_linear(rng):
    k = ConvKernel("standard", rng.standard_normal((3, 3, 3, 4)))
    x, y = rng.standard_normal((2, 6, 6, 3))
    lhs = conv2d(2.5 * x - 0.5 * y, k)
    rhs = 2.5 * conv2d(x, k) - 0.5 * conv2d(y, k)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-10)


def test_conv2d_channel_mismatch_names_both_shapes(rng):
    with pytest.raises(ShapeError, match=r"\(5, 5, 2\).*\(3, 3, 3, 4\)|\(3, 3, 3, 4\).*\(5, 5, 2\)"):
        conv2d(rng.standard_normal((5, 5, 2)), ConvKernel("standard", rng.standard_normal((3, 3, 3, 4))))


def test_same_padding_rejects_even_kernel(rng):
    with pytest.raises(ShapeError):
        ConvKernel("standard", rng.standard_normal((2, 2, 1, 1)))


def test_conv2d_does_not_mutate_input(rng):
    x = rng.standard_normal((5, 5, 2))
    before = x.copy()
    conv2d(x, ConvKernel("standard", rng.standard_normal((3, 3, 2, 2))))
    np.testing.assert_array_equal(x, before)


# ── depthwise / pointwise / separable ────────────────────────────────────────

def test_depthwise_delta_kernels(rng):
    x = rng.standard_normal((5, 5, 2))
    w = _delta(3, 2)
    w[:, :, 1] *= 2.0
    out = depthwise_conv2d(x, ConvKernel("depthwise", w))
    np.testing.assert_allclose(out[..., 0], x[..., 0])
    np.testing.assert_allclose(out[..., 1], 2.0 * x[..., 1])


def test_depthwise_constant_interior():
    w = np.arange(9, dtype=float).reshape(3, 3, 1)
    out = depthwise_conv2d(np.full((5, 5, 1), 2.0), ConvKernel("depthwise", w))
    np.testing.assert_allclose(out[1:-1, 1:-1, 0], 2.0 * w.sum())


def test_depthwise_matches_naive_loops(rng):
    x = rng.standard_normal((5, 5, 3))
    k = ConvKernel("depthwise", rng.standard_normal((3, 3, 3)))
    np.testing.assert_allclose(depthwise_conv2d(x, k), conv2d_reference(x, k), rtol=1e-10, atol=1e-12)


def test_depthwise_channel_count_checked(rng):
    with pytest.raises(ShapeError):
        depthwise_conv2d(rng.standard_normal((4, 4, 3)), ConvKernel("depthwise", rng.standard_normal((3, 3, 2))))


def test_pointwise_identity_and_channel_sum(rng):
    x = rng.standard_normal((4, 4, 3))
    np.testing.assert_allclose(pointwise_conv2d(x, ConvKernel("pointwise", np.eye(3))), x)
    summed = pointwise_conv2d(x, ConvKernel("pointwise", np.ones((3, 1))))
    np.testing.assert_allclose(summed[..., 0], x.sum(axis=-1))


def test_pointwise_matches_per_pixel_matvec(rng):
    x = rng.standard_normal((3, 4, 5))
    w = rng.standard_normal((5, 2))
    expected = np.stack([[w.T @ x[i, j] for j in range(4)] for i in range(3)])
    np.testing.assert_allclose(pointwise_conv2d(x, ConvKernel("pointwise", w)), expected)


def test_pointwise_accepts_1x1_kernel_layout(rng):
    w = rng.standard_normal((1, 1, 3, 2))
    assert ConvKernel("pointwise", w).weights.shape == (3, 2)


def test_separable_with_delta_depthwise_is_pointwise(rng):
    x = rng.standard_normal((6, 6, 4))
    pw = ConvKernel("pointwise", rng.standard_normal((4, 6)), rng.standard_normal(6))
    out = separable_conv2d(x, ConvKernel("depthwise", _delta(3, 4)), pw)
    np.testing.assert_allclose(out, pointwise_conv2d(x, pw), rtol=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_separable_equals_expanded_kernel_f32(seed):
    r = np.random.default_rng(seed)
    x = r.standard_normal((8, 8, 4)).astype(np.float32)
    dw = ConvKernel("depthwise", r.standard_normal((3, 3, 4)).astype(np.float32))
    pw = ConvKernel("pointwise", r.standard_normal((4, 6)).astype(np.float32), r.standard_normal(6).astype(np.float32))
    sep = separable_conv2d(x, dw, pw)
    full = conv2d(x, expand_separable(dw, pw))
    assert np.max(np.abs(sep - full)) < 1e-5


@pytest.mark.parametrize("seed", range(120))
def test_separable_equals_expanded_kernel_random_geometry(seed):
    r = np.random.default_rng([7, seed])
    k = int(r.choice([1, 3, 5]))
    stride = int(r.integers(1, 3))
    padding = str(r.choice(["same", "valid"]))
    h, w = (int(v) for v in r.integers(k, k + 7, size=2))
    c, n, batch = int(r.integers(1, 5)), int(r.integers(1, 6)), int(r.integers(1, 3))
    x = r.uniform(-1, 1, (batch, h, w, c)).astype(np.float32)
    dw = ConvKernel("depthwise", r.uniform(-1, 1, (k, k, c)).astype(np.float32), stride=stride, padding=padding)
    pw = ConvKernel("pointwise", r.uniform(-1, 1, (c, n)).astype(np.float32), r.uniform(-1, 1, n).astype(np.float32))
    sep = separable_conv2d(x, dw, pw)
    full = conv2d(x, expand_separable(dw, pw))
    assert sep.shape == full.shape
    assert np.max(np.abs(sep - full)) < 1e-5, (k, stride, padding, h, w, c, n)


def test_separable_equals_expanded_kernel_f64_strided(rng):
    x = rng.standard_normal((2, 9, 9, 3))
    dw = ConvKernel("depthwise", rng.standard_normal((3, 3, 3)), stride=2)
    pw = ConvKernel("pointwise", rng.standard_normal((3, 5)))
    np.testing.assert_allclose(separable_conv2d(x, dw, pw), conv2d(x, expand_separable(dw, pw)), rtol=1e-10, atol=1e-12)


def test_separable_rejects_depthwise_bias(rng):
    dw = ConvKernel("depthwise", rng.standard_normal((3, 3, 2)), np.zeros(2))
    with pytest.raises(ShapeError):
        separable_conv2d(rng.standard_normal((4, 4, 2)), dw, ConvKernel("pointwise", np.eye(2)))


def test_separable_cost_ratio_at_reference_width():
    cmp = compare_conv_cost(224, 224, 56, 64, 3)
    assert cmp.ratio == pytest.approx(1 / 64 + 1 / 9, rel=0.01)


# ── Deterministic path ───────────────────────────────────────────────────────

def test_deterministic_mode_matches_reference_bitwise(rng):
    x = rng.standard_normal((1, 6, 6, 3)).astype(np.float32)
    k = ConvKernel("standard", rng.standard_normal((3, 3, 3, 4)).astype(np.float32), stride=2)
    with deterministic_mode():
        assert is_deterministic()
        out = conv2d(x, k)
    assert not is_deterministic()
    np.testing.assert_array_equal(out, conv2d_reference(x, k))


def test_deterministic_depthwise_matches_reference_bitwise(rng):
    x = rng.standard_normal((5, 5, 3)).astype(np.float32)
    k = ConvKernel("depthwise", rng.standard_normal((3, 3, 3)).astype(np.float32))
    with deterministic_mode():
        np.testing.assert_array_equal(depthwise_conv2d(x, k), conv2d_reference(x, k))


# ── Pooling ──────────────────────────────────────────────────────────────────

def test_maxpool_constant_and_floor_shape():
    out = maxpool2d(np.full((7, 7, 64), 0.3))
    assert out.shape == (3, 3, 64)
    np.testing.assert_array_equal(out, 0.3)


def test_maxpool_matches_exhaustive_oracle(rng):
    x = rng.standard_normal((2, 4, 5, 3))
    np.testing.assert_array_equal(maxpool2d(x), maxpool2d_reference(x))


def test_maxpool_is_monotone(rng):
    x = rng.standard_normal((6, 6, 2))
    y = x + rng.uniform(0, 1, size=x.shape)
    assert np.all(maxpool2d(x) <= maxpool2d(y))


# ── Activations / elementwise ────────────────────────────────────────────────

def test_activation_fixed_points():
    assert sigmoid(np.array([0.0]))[0] == 0.5
    assert activation("tanh", np.array([0.0]))[0] == 0.0
    assert activation("leaky_relu", np.array([-1.0]), 0.1)[0] == pytest.approx(-0.1)


def test_sigmoid_is_stable_for_large_inputs():
    out = sigmoid(np.array([-800.0, 800.0]))
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [0.0, 1.0])


def test_relu6_scalar_oracle(rng):
    x = rng.uniform(-10, 10, size=(50,))
    np.testing.assert_array_equal(relu6(x), [min(max(v, 0.0), 6.0) for v in x])


def test_activation_unknown_kind():
    with pytest.raises(ShapeError):
        activation("swish", np.zeros(2))


def test_elementwise_algebra(rng):
    a, b = rng.standard_normal((2, 3, 3, 2))
    np.testing.assert_array_equal(elementwise("hadamard", a, np.ones_like(a)), a)
    np.testing.assert_array_equal(elementwise("add", a, b), elementwise("add", b, a))
    expected = np.array([abs(x - y) for x, y in zip(a.ravel(), b.ravel())]).reshape(a.shape)
    np.testing.assert_array_equal(elementwise("abs", elementwise("sub", a, b)), expected)


def test_elementwise_shape_mismatch(rng):
    with pytest.raises(ShapeError):
        elementwise("add", np.zeros((2, 2)), np.zeros((2, 3)))


def test_concat_channels(rng):
    x = rng.standard_normal((3, 3, 64))
    y = rng.standard_normal((3, 3, 64))
    out = concat_channels(x, y)
    assert out.shape == (3, 3, 128)
    np.testing.assert_array_equal(out[..., 64 + 5], y[..., 5])
    np.testing.assert_array_equal(concat_channels(x, np.zeros((3, 3, 0))), x)
    with pytest.raises(ShapeError):
        concat_channels(x, np.zeros((2, 3, 1)))


def test_batchnorm_infer(rng):
    x = rng.standard_normal((4, 4, 3))
    c = np.ones(3)
    np.testing.assert_allclose(batchnorm_infer(x, 0 * c, c, c, 0 * c, eps=0.0), x)
    beta = np.array([0.5, -1.0, 2.0])
    np.testing.assert_allclose(batchnorm_infer(x, 0 * c, c, 0 * c, beta), np.broadcast_to(beta, x.shape))
    mean, var = rng.standard_normal(3), rng.uniform(0.5, 2, 3)
    gamma, b = rng.standard_normal(3), rng.standard_normal(3)
    out = batchnorm_infer(x, mean, var, gamma, b, eps=1e-3)
    i, j, ch = 2, 1, 1
    expected = gamma[ch] * (x[i, j, ch] - mean[ch]) / np.sqrt(var[ch] + 1e-3) + b[ch]
    assert out[i, j, ch] == pytest.approx(expected)
