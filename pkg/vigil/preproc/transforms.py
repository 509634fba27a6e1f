"""Per-clip transforms: temporal sampling, resizing, cropping, motion features, augmentation.

All functions take and return T×H×W×C arrays (or Clips where noted) and
never modify their input.
"""
from __future__ import annotations

import logging
import math
from typing import Optional, Union

import numpy as np

from ..errors import DataError, ShapeError
from .clip import AugmentSpec, Clip

logger = logging.getLogger(__name__)

FramesLike = Union[Clip, np.ndarray]


def _frames(x: FramesLike) -> np.ndarray:
    return x.frames if isinstance(x, Clip) else np.asarray(x)


def _like(x: FramesLike, frames: np.ndarray) -> FramesLike:
    return x.with_frames(frames) if isinstance(x, Clip) else frames


# ── Temporal ─────────────────────────────────────────────────────────────────

def sample_indices(length: int, n: int, duplicate: bool = False) -> np.ndarray:
    """Indices ⌊i·T/n⌋ for i in [0, n)."""
    if length < n and not duplicate:
        raise DataError(
            f"clip has {length} frames but {n} are sampled; "
            "enable duplicate_frames to repeat frames of short clips"
        )
    return (np.arange(n) * length) // n


def uniform_sample(clip: FramesLike, n: int = 32, duplicate: bool = False) -> FramesLike:
    frames = _frames(clip)
    return _like(clip, frames[sample_indices(frames.shape[0], n, duplicate)])


# ── Spatial ──────────────────────────────────────────────────────────────────

def _axis_weights(size_in: int, size_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel centres, clamped at the borders
    src = (np.arange(size_out) + 0.5) * (size_in / size_out) - 0.5
    src = np.clip(src, 0.0, size_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, size_in - 1)
    return lo, hi, src - lo


def resize_bilinear(clip: FramesLike, size: tuple[int, int]) -> FramesLike:
    frames = _frames(clip)
    h, w = frames.shape[-3], frames.shape[-2]
    oh, ow = size
    if (oh, ow) == (h, w):
        return _like(clip, frames.copy())
    y0, y1, wy = _axis_weights(h, oh)
    x0, x1, wx = _axis_weights(w, ow)
    dtype = frames.dtype
    wy = wy.astype(dtype)[:, None, None]
    wx = wx.astype(dtype)[:, None]
    top = frames[..., y0, :, :]
    bottom = frames[..., y1, :, :]
    rows = top * (1 - wy) + bottom * wy
    out = rows[..., x0, :] * (1 - wx) + rows[..., x1, :] * wx
    return _like(clip, out.astype(dtype, copy=False))


def crop(frames: np.ndarray, top: int, left: int, side: int) -> np.ndarray:
    h, w = frames.shape[-3], frames.shape[-2]
    if side > min(h, w) or top < 0 or left < 0 or top + side > h or left + side > w:
        raise ShapeError(f"crop ({top}, {left}, {side}) outside frames of shape {frames.shape}")
    return frames[..., top : top + side, left : left + side, :]


def center_crop(frames: np.ndarray, side: int) -> np.ndarray:
    h, w = frames.shape[-3], frames.shape[-2]
    return crop(frames, (h - side) // 2, (w - side) // 2, side)


def random_crop_resize(
    frames: np.ndarray, out_size: int, scale: tuple[float, float], rng: np.random.Generator
) -> np.ndarray:
    """Square crop whose side is a random fraction of the short edge, resized to out_size."""
    h, w = frames.shape[-3], frames.shape[-2]
    short = min(h, w)
    side = max(1, min(short, int(round(rng.uniform(*scale) * short))))
    top = int(rng.integers(0, h - side + 1))
    left = int(rng.integers(0, w - side + 1))
    return resize_bilinear(crop(frames, top, left, side), (out_size, out_size))


def flip_horizontal(clip: FramesLike) -> FramesLike:
    return _like(clip, _frames(clip)[..., ::-1, :].copy())


# ── Motion features ──────────────────────────────────────────────────────────

def frame_difference(clip: FramesLike) -> np.ndarray:
    """fd_i = frame_{i+1} − frame_i; T−1 signed steps in [−1, 1]."""
    frames = _frames(clip)
    if frames.shape[0] < 2:
        raise DataError(f"frame difference needs at least 2 frames, got {frames.shape[0]}")
    return frames[1:] - frames[:-1]


def background_residual(clip: FramesLike) -> np.ndarray:
    """Signed frame_i − mean over all frames; sums to zero over time up to rounding."""
    frames = _frames(clip)
    return frames - frames.mean(axis=0, dtype=np.float64).astype(frames.dtype)


def background_suppress(clip: FramesLike) -> np.ndarray:
    """|frame_i − mean over all frames|."""
    return np.abs(background_residual(clip))


# ── Augmentation ─────────────────────────────────────────────────────────────

def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3 * sigma)
    taps = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (taps / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(frames: np.ndarray, sigma: float) -> np.ndarray:
    """Separable truncated Gaussian over H and W, edge-padded."""
    if sigma <= 0:
        return frames.copy()
    k = gaussian_kernel(sigma).astype(frames.dtype)
    r = len(k) // 2
    out = frames
    for axis in (-3, -2):
        pad = [(0, 0)] * frames.ndim
        pad[axis] = (r, r)
        padded = np.pad(out, pad, mode="edge")
        size = out.shape[axis]
        acc = np.zeros_like(out)
        for t, weight in enumerate(k):
            acc += weight * np.take(padded, np.arange(t, t + size), axis=axis)
        out = acc
    return out


def augment(clip: FramesLike, spec: AugmentSpec, rng: Optional[np.random.Generator] = None) -> FramesLike:
    """Brightness, blur and flip with one draw per clip; output clamped to [0, 1]."""
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    frames = _frames(clip)
    delta = rng.uniform(-spec.brightness, spec.brightness) if spec.brightness > 0 else 0.0
    blur = rng.random() < spec.blur_prob
    sigma = rng.uniform(*spec.blur_sigma) if blur else 0.0
    flip = rng.random() < spec.flip_prob

    out = frames
    if delta:
        out = np.clip(out + np.asarray(delta, dtype=frames.dtype), 0.0, 1.0)
    if sigma > 0:
        out = np.clip(gaussian_blur(out, sigma), 0.0, 1.0)
    if flip:
        out = out[..., ::-1, :]
    return _like(clip, np.ascontiguousarray(out, dtype=frames.dtype))
