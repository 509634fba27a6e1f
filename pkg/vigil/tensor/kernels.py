"""Forward numeric kernels: convolutions, pooling, activations, elementwise algebra.

Spatial kernels take channels-last input shaped (H, W, C) or (N, H, W, C)
and return the same rank. Public kernels never mutate their inputs.

Two execution paths exist. The fast path reorders reductions (im2col +
matmul); the deterministic path accumulates in the naive (i, j, c) order,
elementwise over output pixels, so it is bitwise identical to the
quadruple-loop reference implementations at the bottom of this module.
"""
from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator, Literal

import numpy as np

from ..errors import ShapeError

logger = logging.getLogger(__name__)

Padding = Literal["same", "valid"]
KernelKind = Literal["standard", "depthwise", "pointwise"]
ActivationKind = Literal["sigmoid", "tanh", "leaky_relu", "relu6"]
ElementwiseKind = Literal["add", "sub", "hadamard", "abs"]

_WEIGHT_RANK = {"standard": 4, "depthwise": 3, "pointwise": 2}

_deterministic = False


def set_deterministic(flag: bool) -> None:
    global _deterministic
    _deterministic = bool(flag)
    logger.debug("Deterministic kernels: %s", _deterministic)


def is_deterministic() -> bool:
    return _deterministic


@contextmanager
def deterministic_mode(flag: bool = True) -> Iterator[None]:
    """Temporarily force (or release) the naive summation order."""
    previous = _deterministic
    set_deterministic(flag)
    try:
        yield
    finally:
        set_deterministic(previous)


@dataclass(frozen=True)
class ConvKernel:
    """Convolution weights plus geometry.

    standard: (K, K, C_in, C_out); depthwise: (K, K, C); pointwise: (C_in, C_out),
    a (1, 1, C_in, C_out) array is accepted and flattened.
    """
    kind: KernelKind
    weights: np.ndarray
    bias: np.ndarray | None = None
    stride: int = 1
    padding: Padding = "same"

    def __post_init__(self) -> None:
        w = np.asarray(self.weights)
        if self.kind not in _WEIGHT_RANK:
            raise ShapeError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "pointwise" and w.ndim == 4 and w.shape[:2] == (1, 1):
            w = w.reshape(w.shape[2:])
        object.__setattr__(self, "weights", w)
        if w.ndim != _WEIGHT_RANK[self.kind]:
            raise ShapeError(f"{self.kind} kernel needs rank {_WEIGHT_RANK[self.kind]}, got shape {w.shape}")
        if self.kind != "pointwise":
            if w.shape[0] != w.shape[1]:
                raise ShapeError(f"kernel must be square, got shape {w.shape}")
            if self.padding == "same" and w.shape[0] % 2 == 0:
                raise ShapeError(f"'same' padding needs an odd kernel size, got {w.shape[0]}")
        elif self.stride != 1:
            raise ShapeError("pointwise kernels keep spatial dims; stride must be 1")
        if self.stride < 1:
            raise ShapeError(f"stride must be positive, got {self.stride}")
        if self.padding not in ("same", "valid"):
            raise ShapeError(f"padding must be 'same' or 'valid', got {self.padding!r}")
        if self.bias is not None:
            b = np.asarray(self.bias)
            object.__setattr__(self, "bias", b)
            if b.shape != (self.c_out,):
                raise ShapeError(f"bias shape {b.shape} does not match C_out={self.c_out}")

    @property
    def size(self) -> int:
        return 1 if self.kind == "pointwise" else int(self.weights.shape[0])

    @property
    def c_in(self) -> int:
        return int(self.weights.shape[0] if self.kind == "pointwise" else self.weights.shape[2])

    @property
    def c_out(self) -> int:
        if self.kind == "standard":
            return int(self.weights.shape[3])
        if self.kind == "depthwise":
            return int(self.weights.shape[2])
        return int(self.weights.shape[1])


# ── Geometry helpers ─────────────────────────────────────────────────────────

def to_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    """Return x as (N, H, W, C) plus whether a batch axis was added."""
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"expected H×W×C or N×H×W×C input, got shape {x.shape}")


def conv_output_size(size: int, k: int, stride: int, padding: Padding) -> tuple[int, int, int]:
    """Return (output size, pad before, pad after) along one spatial axis."""
    if padding == "same":
        out = -(-size // stride)
        total = max((out - 1) * stride + k - size, 0)
        return out, total // 2, total - total // 2
    if size < k:
        raise ShapeError(f"'valid' convolution needs input >= kernel, got {size} < {k}")
    return (size - k) // stride + 1, 0, 0


def pad_spatial(x4: np.ndarray, k: int, stride: int, padding: Padding) -> tuple[np.ndarray, int, int, int, int]:
    """Zero-pad (N, H, W, C) for a K×K window. Returns (xp, H_out, W_out, top, left)."""
    _, h, w, _ = x4.shape
    ho, top, bottom = conv_output_size(h, k, stride, padding)
    wo, left, right = conv_output_size(w, k, stride, padding)
    if top or bottom or left or right:
        x4 = np.pad(x4, ((0, 0), (top, bottom), (left, right), (0, 0)))
    return x4, ho, wo, top, left


def window(xp: np.ndarray, i: int, j: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """View of the padded input seen by kernel tap (i, j) for every output pixel."""
    return xp[:, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride, :]


def _restore(out: np.ndarray, squeeze: bool) -> np.ndarray:
    return out[0] if squeeze else out


def _require_kind(k: ConvKernel, kind: KernelKind) -> None:
    if k.kind != kind:
        raise ShapeError(f"expected a {kind} kernel, got {k.kind}")


def _check_channels(op: str, x: np.ndarray, k: ConvKernel) -> None:
    if x.shape[-1] != k.c_in:
        raise ShapeError(f"{op}: input shape {x.shape} does not match kernel shape {k.weights.shape}")


def contract(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """(..., D) × (D, M) → (..., M), in fixed order when deterministic."""
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"cannot contract shape {x.shape} with {w.shape}")
    if not _deterministic:
        return x @ w
    out = np.zeros(x.shape[:-1] + (w.shape[1],), dtype=np.result_type(x, w))
    for d in range(w.shape[0]):
        out += x[..., d : d + 1] * w[d]
    return out


# ── Convolutions ─────────────────────────────────────────────────────────────

def conv2d(x: np.ndarray, k: ConvKernel) -> np.ndarray:
    _require_kind(k, "standard")
    _check_channels("conv2d", x, k)
    dtype = np.result_type(x, k.weights)
    x4, squeeze = to_batch(x.astype(dtype, copy=False))
    w = k.weights.astype(dtype, copy=False)
    size, c_in = k.size, k.c_in
    xp, ho, wo, _, _ = pad_spatial(x4, size, k.stride, k.padding)
    n = x4.shape[0]
    if _deterministic:
        out = np.zeros((n, ho, wo, k.c_out), dtype=dtype)
        for i in range(size):
            for j in range(size):
                win = window(xp, i, j, k.stride, ho, wo)
                for c in range(c_in):
                    out += win[..., c : c + 1] * w[i, j, c]
    else:
        cols = np.stack(
            [window(xp, i, j, k.stride, ho, wo) for i in range(size) for j in range(size)], axis=3
        )
        out = cols.reshape(n, ho, wo, size * size * c_in) @ w.reshape(size * size * c_in, k.c_out)
    if k.bias is not None:
        out = out + k.bias.astype(dtype, copy=False)
    return _restore(out, squeeze)


def depthwise_conv2d(x: np.ndarray, k: ConvKernel) -> np.ndarray:
    _require_kind(k, "depthwise")
    _check_channels("depthwise_conv2d", x, k)
    dtype = np.result_type(x, k.weights)
    x4, squeeze = to_batch(x.astype(dtype, copy=False))
    w = k.weights.astype(dtype, copy=False)
    xp, ho, wo, _, _ = pad_spatial(x4, k.size, k.stride, k.padding)
    # Per-channel taps are already accumulated in (i, j) order on both paths.
    out = np.zeros((x4.shape[0], ho, wo, k.c_out), dtype=dtype)
    for i in range(k.size):
        for j in range(k.size):
            out += window(xp, i, j, k.stride, ho, wo) * w[i, j]
    if k.bias is not None:
        out = out + k.bias.astype(dtype, copy=False)
    return _restore(out, squeeze)


def pointwise_conv2d(x: np.ndarray, k: ConvKernel) -> np.ndarray:
    _require_kind(k, "pointwise")
    _check_channels("pointwise_conv2d", x, k)
    dtype = np.result_type(x, k.weights)
    to_batch(x)
    out = contract(x.astype(dtype, copy=False), k.weights.astype(dtype, copy=False))
    if k.bias is not None:
        out = out + k.bias.astype(dtype, copy=False)
    return out


def separable_conv2d(x: np.ndarray, dw: ConvKernel, pw: ConvKernel) -> np.ndarray:
    """pointwise ∘ depthwise; the composite's single bias lives on `pw`."""
    _require_kind(dw, "depthwise")
    _require_kind(pw, "pointwise")
    if dw.bias is not None:
        raise ShapeError("separable_conv2d applies one bias after the pointwise step; dw.bias must be None")
    return pointwise_conv2d(depthwise_conv2d(x, dw), pw)


def expand_separable(dw: ConvKernel, pw: ConvKernel) -> ConvKernel:
    """Rank-decomposed dense kernel K[i, j, c, n] = dw[i, j, c] · pw[c, n]."""
    _require_kind(dw, "depthwise")
    _require_kind(pw, "pointwise")
    if dw.c_out != pw.c_in:
        raise ShapeError(f"depthwise shape {dw.weights.shape} does not feed pointwise shape {pw.weights.shape}")
    full = dw.weights[:, :, :, None] * pw.weights[None, None, :, :]
    return ConvKernel("standard", full, pw.bias, dw.stride, dw.padding)


def dense(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Fully connected layer on (N, D) input."""
    if x.ndim != 2:
        raise ShapeError(f"dense expects (N, D) input, got shape {x.shape}")
    out = contract(x, w)
    return out if b is None else out + b


# ── Pooling ──────────────────────────────────────────────────────────────────

def pool_windows(x4: np.ndarray, window_hw: tuple[int, int]) -> np.ndarray:
    """Non-overlapping windows as (N, H', W', C, ph·pw), scan order row-major."""
    ph, pw = window_hw
    n, h, w, c = x4.shape
    ho, wo = h // ph, w // pw
    if ho < 1 or wo < 1:
        raise ShapeError(f"pool window {window_hw} larger than input shape {x4.shape}")
    v = x4[:, : ho * ph, : wo * pw, :].reshape(n, ho, ph, wo, pw, c)
    return v.transpose(0, 1, 3, 5, 2, 4).reshape(n, ho, wo, c, ph * pw)


def maxpool2d(x: np.ndarray, window_hw: tuple[int, int] = (2, 2)) -> np.ndarray:
    """Max over non-overlapping windows; trailing rows/cols are dropped (7 → 3)."""
    x4, squeeze = to_batch(x)
    return _restore(pool_windows(x4, window_hw).max(axis=-1), squeeze)


# ── Activations ──────────────────────────────────────────────────────────────

def sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)


def leaky_relu(x: np.ndarray, slope: float = 0.1) -> np.ndarray:
    return np.where(x > 0, x, x * np.asarray(slope, dtype=x.dtype))


def relu6(x: np.ndarray) -> np.ndarray:
    return np.minimum(np.maximum(x, 0), 6).astype(x.dtype, copy=False)


def activation(kind: ActivationKind, x: np.ndarray, slope: float = 0.1) -> np.ndarray:
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return np.tanh(x)
    if kind == "leaky_relu":
        return leaky_relu(x, slope)
    if kind == "relu6":
        return relu6(x)
    raise ShapeError(f"unknown activation {kind!r}")


# ── Elementwise algebra ──────────────────────────────────────────────────────

def elementwise(kind: ElementwiseKind, a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    if kind == "abs":
        return np.abs(a)
    if b is None:
        raise ShapeError(f"{kind} needs two operands")
    if a.shape != b.shape:
        raise ShapeError(f"{kind}: operand shapes differ: {a.shape} vs {b.shape}")
    if kind == "add":
        return a + b
    if kind == "sub":
        return a - b
    if kind == "hadamard":
        return a * b
    raise ShapeError(f"unknown elementwise op {kind!r}")


def concat_channels(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[:-1] != b.shape[:-1]:
        raise ShapeError(f"concat_channels: spatial dims differ: {a.shape} vs {b.shape}")
    return np.concatenate([a, b], axis=-1)


def batchnorm_infer(
    x: np.ndarray,
    mean: np.ndarray,
    var: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    eps: float = 1e-3,
) -> np.ndarray:
    """Per-channel affine normalization with stored statistics."""
    c = x.shape[-1]
    for name, v in (("mean", mean), ("var", var), ("gamma", gamma), ("beta", beta)):
        if np.shape(v) != (c,):
            raise ShapeError(f"batchnorm {name} shape {np.shape(v)} does not match channels of {x.shape}")
    scale = gamma / np.sqrt(var + eps)
    return ((x - mean) * scale + beta).astype(x.dtype, copy=False)


# ── Naive reference implementations (semantic contract) ──────────────────────

def conv2d_reference(x: np.ndarray, k: ConvKernel) -> np.ndarray:
    """Quadruple-loop convolution. Slow; intended for tiny shapes in tests."""
    _check_channels("conv2d", x, k)
    dtype = np.result_type(x, k.weights)
    x4, squeeze = to_batch(x.astype(dtype, copy=False))
    w = k.weights.astype(dtype, copy=False)
    size, s = k.size, k.stride
    if k.kind == "pointwise":
        w = w[None, None]
    xp, ho, wo, _, _ = pad_spatial(x4, size, s, k.padding)
    out = np.zeros((x4.shape[0], ho, wo, k.c_out), dtype=dtype)
    zero = dtype.type(0)
    for b in range(x4.shape[0]):
        for y in range(ho):
            for xx in range(wo):
                for o in range(k.c_out):
                    acc = zero
                    for i in range(size):
                        for j in range(size):
                            if k.kind == "depthwise":
                                acc += xp[b, y * s + i, xx * s + j, o] * w[i, j, o]
                                continue
                            for c in range(k.c_in):
                                acc += xp[b, y * s + i, xx * s + j, c] * w[i, j, c, o]
                    out[b, y, xx, o] = acc
    if k.bias is not None:
        out = out + k.bias.astype(dtype, copy=False)
    return _restore(out, squeeze)


def maxpool2d_reference(x: np.ndarray, window_hw: tuple[int, int] = (2, 2)) -> np.ndarray:
    x4, squeeze = to_batch(x)
    ph, pw = window_hw
    n, h, w, c = x4.shape
    out = np.empty((n, h // ph, w // pw, c), dtype=x4.dtype)
    for b in range(n):
        for y in range(h // ph):
            for xx in range(w // pw):
                for ch in range(c):
                    out[b, y, xx, ch] = max(
                        x4[b, y * ph + i, xx * pw + j, ch] for i in range(ph) for j in range(pw)
                    )
    return _restore(out, squeeze)
