"""Differentiable wrappers over the tensor-core kernels.

Every op computes its value with the same kernel the untraced code uses and
registers a backward rule on the input's tape. Conventions at kinks:
leaky_relu'(0) is the negative slope, relu6' is 0 at 0 and 6, |x|' is 0 at 0,
and maxpool routes to the first maximum in scan order.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import ShapeError
from ..tensor import kernels as K
from .tape import Var, tape_of


def _einsum(spec: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # optimize=False keeps numpy's own fixed-order loops (no BLAS reordering)
    return np.einsum(spec, a, b, optimize=not K.is_deterministic())


def _sum_to_channels(g: np.ndarray) -> np.ndarray:
    return g.reshape(-1, g.shape[-1]).sum(axis=0)


# ── Elementwise ──────────────────────────────────────────────────────────────

def add(a: Var, b: Var) -> Var:
    value = K.elementwise("add", a.value, b.value)
    return tape_of(a, b).emit("add", (a, b), value, lambda g: (g, g))


def sub(a: Var, b: Var) -> Var:
    value = K.elementwise("sub", a.value, b.value)
    return tape_of(a, b).emit("sub", (a, b), value, lambda g: (g, -g))


def mul(a: Var, b: Var) -> Var:
    value = K.elementwise("hadamard", a.value, b.value)
    av, bv = a.value, b.value
    return tape_of(a, b).emit("hadamard", (a, b), value, lambda g: (g * bv, g * av))


def abs_(x: Var) -> Var:
    t = tape_of(x)
    sign = np.sign(x.value)
    t.note_kink(sign)
    return t.emit("abs", (x,), K.elementwise("abs", x.value), lambda g: (g * sign,))


def scale(x: Var, factor: float) -> Var:
    f = np.asarray(factor, dtype=x.dtype)
    return tape_of(x).emit("scale", (x,), x.value * f, lambda g: (g * f,))


def add_bias(x: Var, b: Var) -> Var:
    if b.shape != (x.shape[-1],):
        raise ShapeError(f"bias shape {b.shape} does not match channels of {x.shape}")
    return tape_of(x, b).emit("add_bias", (x, b), x.value + b.value, lambda g: (g, _sum_to_channels(g)))


# ── Activations ──────────────────────────────────────────────────────────────

def sigmoid(x: Var) -> Var:
    s = K.sigmoid(x.value)
    return tape_of(x).emit("sigmoid", (x,), s, lambda g: (g * s * (1 - s),))


def tanh(x: Var) -> Var:
    th = np.tanh(x.value)
    return tape_of(x).emit("tanh", (x,), th, lambda g: (g * (1 - th * th),))


def leaky_relu(x: Var, slope: float = 0.1) -> Var:
    t = tape_of(x)
    positive = x.value > 0
    t.note_kink(positive)
    deriv = np.where(positive, 1, slope).astype(x.dtype)
    return t.emit("leaky_relu", (x,), K.leaky_relu(x.value, slope), lambda g: (g * deriv,))


def relu6(x: Var) -> Var:
    t = tape_of(x)
    region = (x.value > 0).astype(np.int8) + (x.value >= 6).astype(np.int8)
    t.note_kink(region)
    deriv = (region == 1).astype(x.dtype)
    return t.emit("relu6", (x,), K.relu6(x.value), lambda g: (g * deriv,))


def activation(kind: str, x: Var, slope: float = 0.1) -> Var:
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return tanh(x)
    if kind == "leaky_relu":
        return leaky_relu(x, slope)
    if kind == "relu6":
        return relu6(x)
    raise ShapeError(f"unknown activation {kind!r}")


# ── Convolutions ─────────────────────────────────────────────────────────────

def _spatial_backward(
    g: np.ndarray, xv: np.ndarray, wv: np.ndarray, stride: int, padding: K.Padding, depthwise: bool
) -> tuple[np.ndarray, np.ndarray]:
    x4, squeeze = K.to_batch(xv)
    g4 = g[None] if squeeze else g
    size = wv.shape[0]
    xp, ho, wo, top, left = K.pad_spatial(x4, size, stride, padding)
    dxp = np.zeros(xp.shape, dtype=np.result_type(xp, g4))
    dw = np.zeros(wv.shape, dtype=np.result_type(wv, g4))
    for i in range(size):
        for j in range(size):
            win = K.window(xp, i, j, stride, ho, wo)
            rows = slice(i, i + stride * (ho - 1) + 1, stride)
            cols = slice(j, j + stride * (wo - 1) + 1, stride)
            if depthwise:
                dw[i, j] = (win * g4).sum(axis=(0, 1, 2))
                dxp[:, rows, cols, :] += g4 * wv[i, j]
            else:
                dw[i, j] = _einsum("nhwc,nhwo->co", win, g4)
                dxp[:, rows, cols, :] += _einsum("nhwo,co->nhwc", g4, wv[i, j])
    h, w = x4.shape[1:3]
    dx = dxp[:, top : top + h, left : left + w, :]
    return (dx[0] if squeeze else dx), dw


def conv2d(x: Var, w: Var, b: Optional[Var] = None, stride: int = 1, padding: K.Padding = "same") -> Var:
    kernel = K.ConvKernel("standard", w.value, None, stride, padding)
    value = K.conv2d(x.value, kernel)
    xv, wv = x.value, w.value

    def backward(g: np.ndarray):
        return _spatial_backward(g, xv, wv, stride, padding, depthwise=False)

    out = tape_of(x, w).emit("conv2d", (x, w), value, backward)
    return out if b is None else add_bias(out, b)


def depthwise_conv2d(x: Var, w: Var, stride: int = 1, padding: K.Padding = "same") -> Var:
    kernel = K.ConvKernel("depthwise", w.value, None, stride, padding)
    value = K.depthwise_conv2d(x.value, kernel)
    xv, wv = x.value, w.value

    def backward(g: np.ndarray):
        return _spatial_backward(g, xv, wv, stride, padding, depthwise=True)

    return tape_of(x, w).emit("depthwise_conv2d", (x, w), value, backward)


def _linear(op: str, x: Var, w: Var) -> Var:
    xv, wv = x.value, w.value
    value = K.contract(xv, wv)

    def backward(g: np.ndarray):
        dx = K.contract(g, np.ascontiguousarray(wv.T))
        dw = _einsum("pc,po->co", xv.reshape(-1, xv.shape[-1]), g.reshape(-1, g.shape[-1]))
        return dx, dw

    return tape_of(x, w).emit(op, (x, w), value, backward)


def pointwise_conv2d(x: Var, w: Var, b: Optional[Var] = None) -> Var:
    K.ConvKernel("pointwise", w.value)
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"pointwise_conv2d: input shape {x.shape} does not match kernel shape {w.shape}")
    out = _linear("pointwise_conv2d", x, w)
    return out if b is None else add_bias(out, b)


def separable_conv2d(
    x: Var, dw: Var, pw: Var, b: Optional[Var] = None, stride: int = 1, padding: K.Padding = "same"
) -> Var:
    return pointwise_conv2d(depthwise_conv2d(x, dw, stride, padding), pw, b)


def dense(x: Var, w: Var, b: Optional[Var] = None) -> Var:
    if x.value.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"dense: input shape {x.shape} does not match weight shape {w.shape}")
    out = _linear("dense", x, w)
    return out if b is None else add_bias(out, b)


# ── Pooling / layout ─────────────────────────────────────────────────────────

def maxpool2d(x: Var, window_hw: tuple[int, int] = (2, 2)) -> Var:
    t = tape_of(x)
    x4, squeeze = K.to_batch(x.value)
    windows = K.pool_windows(x4, window_hw)
    idx = windows.argmax(axis=-1)
    t.note_kink(idx)
    out4 = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    ph, pw = window_hw
    n, ho, wo, c = out4.shape
    in_shape = x4.shape

    def backward(g: np.ndarray):
        g4 = g[None] if squeeze else g
        gw = np.zeros((n, ho, wo, c, ph * pw), dtype=g4.dtype)
        np.put_along_axis(gw, idx[..., None], g4[..., None], axis=-1)
        gw = gw.reshape(n, ho, wo, c, ph, pw).transpose(0, 1, 4, 2, 5, 3).reshape(n, ho * ph, wo * pw, c)
        dx = np.zeros(in_shape, dtype=g4.dtype)
        dx[:, : ho * ph, : wo * pw, :] = gw
        return (dx[0] if squeeze else dx,)

    return t.emit("maxpool2d", (x,), out4[0] if squeeze else out4, backward, {"argmax": idx})


def concat_channels(a: Var, b: Var) -> Var:
    split = a.shape[-1]
    value = K.concat_channels(a.value, b.value)
    return tape_of(a, b).emit("concat_channels", (a, b), value, lambda g: (g[..., :split], g[..., split:]))


def reshape(x: Var, shape: tuple[int, ...]) -> Var:
    original = x.shape
    return tape_of(x).emit("reshape", (x,), x.value.reshape(shape), lambda g: (g.reshape(original),))


def flatten(x: Var) -> Var:
    """(N, ...) → (N, D)."""
    return reshape(x, (x.shape[0], -1))


def take(x: Var, start: int, stop: int) -> Var:
    """Rows [start, stop) along axis 0."""
    shape = x.shape

    def backward(g: np.ndarray):
        dx = np.zeros(shape, dtype=g.dtype)
        dx[start:stop] = g
        return (dx,)

    return tape_of(x).emit("take", (x,), x.value[start:stop], backward)


def sum_(x: Var) -> Var:
    shape = x.shape
    return tape_of(x).emit("sum", (x,), np.asarray(x.value.sum()), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(x: Var) -> Var:
    return scale(sum_(x), 1.0 / x.value.size)


# ── Normalization ────────────────────────────────────────────────────────────

def batchnorm_infer(x: Var, gamma: Var, beta: Var, mean_: Var, var: Var, eps: float = 1e-3) -> Var:
    mu, sigma2 = mean_.value, var.value
    value = K.batchnorm_infer(x.value, mu, sigma2, gamma.value, beta.value, eps)
    inv = 1.0 / np.sqrt(sigma2 + eps)
    xhat = (x.value - mu) * inv
    gv = gamma.value

    def backward(g: np.ndarray):
        return g * (gv * inv), _sum_to_channels(g * xhat), _sum_to_channels(g), None, None

    return tape_of(x, gamma, beta).emit("batchnorm_infer", (x, gamma, beta, mean_, var), value, backward)


def batchnorm_train(x: Var, gamma: Var, beta: Var, eps: float = 1e-3) -> tuple[Var, np.ndarray, np.ndarray]:
    """Normalize with batch statistics; also returns them for running-average updates."""
    flat = x.value.reshape(-1, x.shape[-1])
    count = flat.shape[0]
    mu = flat.mean(axis=0)
    sigma2 = flat.var(axis=0)
    inv = 1.0 / np.sqrt(sigma2 + eps)
    xhat = (x.value - mu) * inv
    gv = gamma.value
    value = (xhat * gv + beta.value).astype(x.dtype, copy=False)

    def backward(g: np.ndarray):
        dxhat = g * gv
        s1 = _sum_to_channels(dxhat)
        s2 = _sum_to_channels(dxhat * xhat)
        dx = inv / count * (count * dxhat - s1 - xhat * s2)
        return dx, _sum_to_channels(g * xhat), _sum_to_channels(g)

    out = tape_of(x, gamma, beta).emit("batchnorm_train", (x, gamma, beta), value, backward)
    return out, mu, sigma2


# ── Loss / gradient control ──────────────────────────────────────────────────

def bce_with_logits(z: Var, y: np.ndarray) -> Var:
    """Mean binary cross-entropy on logits, −[y log σ(z) + (1−y) log(1−σ(z))]."""
    zv = z.value
    y = np.asarray(y, dtype=zv.dtype).reshape(zv.shape)
    per = np.maximum(zv, 0) - zv * y + np.log1p(np.exp(-np.abs(zv)))
    count = zv.size
    p = K.sigmoid(zv)
    return tape_of(z).emit(
        "bce_with_logits", (z,), np.asarray(per.mean()), lambda g: (g * (p - y) / count,)
    )


def stop_gradient(x: Var) -> Var:
    return Var(x.value, tape=x.tape, requires_grad=False)


def threshold(x: Var, level: float = 0.5) -> Var:
    """Indicator x >= level. Not differentiable."""
    value = (x.value >= level).astype(x.dtype)
    return tape_of(x).emit("threshold", (x,), value, None)
