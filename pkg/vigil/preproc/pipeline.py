"""Clip → (background-suppressed frames, frame differences) stream inputs."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from .clip import AugmentSpec, Clip, PreprocSpec
from .transforms import (
    augment,
    background_suppress,
    center_crop,
    frame_difference,
    random_crop_resize,
    resize_bilinear,
    uniform_sample,
)

logger = logging.getLogger(__name__)


def clip_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    """Per-clip generator; independent of how clips are spread over workers."""
    return np.random.default_rng([seed, epoch, index])


def model_frames(
    clip: Clip,
    spec: PreprocSpec,
    train: bool = False,
    augment_spec: Optional[AugmentSpec] = None,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Sample, resize and crop; the geometry both streams share."""
    frames = uniform_sample(clip.frames, spec.n_frames, spec.duplicate_frames)
    frames = resize_bilinear(frames, (spec.resize_to, spec.resize_to))
    if train:
        aug = augment_spec or AugmentSpec()
        rng = rng if rng is not None else np.random.default_rng(aug.seed)
        frames = augment(frames, aug, rng)
        return random_crop_resize(frames, spec.crop_to, aug.crop_scale, rng)
    return np.ascontiguousarray(center_crop(frames, spec.crop_to))


def prepare_streams(
    clip: Clip,
    spec: Optional[PreprocSpec] = None,
    train: bool = False,
    augment_spec: Optional[AugmentSpec] = None,
    rng: Optional[np.random.Generator] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Return (bsf, fd), shaped n×S×S×3 and (n−1)×S×S×3 for crop side S."""
    spec = spec or PreprocSpec()
    frames = model_frames(clip, spec, train, augment_spec, rng)
    return background_suppress(frames), frame_difference(frames)


def prepare_batch(
    clips: Sequence[Clip],
    spec: PreprocSpec,
    indices: Sequence[int],
    train: bool = False,
    augment_spec: Optional[AugmentSpec] = None,
    epoch: int = 0,
    workers: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Stack prepared streams for a batch as (N, T, H, W, 3) arrays.

    Clip `indices[k]` draws from clip_rng(seed, epoch, indices[k]), so the
    result does not depend on the worker count.
    """
    seed = augment_spec.seed if augment_spec is not None else 0

    def one(index: int) -> tuple[np.ndarray, np.ndarray]:
        rng = clip_rng(seed, epoch, index) if train else None
        return prepare_streams(clips[index], spec, train, augment_spec, rng)

    if workers > 1 and len(indices) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pairs = list(pool.map(one, indices))
    else:
        pairs = [one(i) for i in indices]
    bsf = np.stack([p[0] for p in pairs]).astype(np.float32, copy=False)
    fd = np.stack([p[1] for p in pairs]).astype(np.float32, copy=False)
    return bsf, fd
