"""Clip value type and the pre-processing specs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from ..errors import ConfigError, DataError


@dataclass(frozen=True)
class Clip:
    """T×H×W×3 frames with pixel values in [0, 1]."""
    frames: np.ndarray
    source_id: str = ""
    fps: Optional[float] = None

    def __post_init__(self) -> None:
        f = np.asarray(self.frames)
        if f.dtype not in (np.float32, np.float64):
            f = f.astype(np.float32)
        if f.ndim != 4 or f.shape[-1] != 3:
            raise DataError(f"clip {self.source_id!r}: expected T×H×W×3 frames, got shape {f.shape}")
        if f.shape[0] < 2:
            raise DataError(f"clip {self.source_id!r}: needs at least 2 frames, got {f.shape[0]}")
        if np.isnan(f).any() or f.min() < 0.0 or f.max() > 1.0:
            raise DataError(f"clip {self.source_id!r}: pixel values must lie in [0, 1]")
        if f.flags.writeable or not f.flags.c_contiguous:
            f = np.array(f, order="C")
            f.setflags(write=False)
        object.__setattr__(self, "frames", f)

    @property
    def length(self) -> int:
        return int(self.frames.shape[0])

    @property
    def size(self) -> tuple[int, int]:
        return int(self.frames.shape[1]), int(self.frames.shape[2])

    def with_frames(self, frames: np.ndarray) -> "Clip":
        return Clip(frames, self.source_id, self.fps)


class AugmentSpec(BaseModel):
    """Train-time augmentation; one random draw per clip, applied to every frame."""
    brightness: float = Field(0.2, ge=0.0, le=1.0, description="max |delta| added to pixel values")
    flip_prob: float = Field(0.5, ge=0.0, le=1.0)
    blur_sigma: tuple[float, float] = (0.0, 1.0)
    blur_prob: float = Field(0.5, ge=0.0, le=1.0)
    crop_scale: tuple[float, float] = (0.6, 1.0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_ranges(self) -> "AugmentSpec":
        lo, hi = self.blur_sigma
        if not 0.0 <= lo <= hi:
            raise ConfigError(f"blur_sigma range must satisfy 0 <= lo <= hi, got {self.blur_sigma}")
        lo, hi = self.crop_scale
        if not 0.0 < lo <= hi <= 1.0:
            raise ConfigError(f"crop_scale range must satisfy 0 < lo <= hi <= 1, got {self.crop_scale}")
        return self

    @classmethod
    def disabled(cls, seed: int = 0) -> "AugmentSpec":
        return cls(brightness=0.0, flip_prob=0.0, blur_sigma=(0.0, 0.0), blur_prob=0.0, crop_scale=(1.0, 1.0), seed=seed)


class PreprocSpec(BaseModel):
    n_frames: int = Field(32, ge=2)
    resize_to: int = Field(320, ge=1)
    crop_to: int = Field(224, ge=1)
    duplicate_frames: bool = False

    @model_validator(mode="after")
    def _check_sizes(self) -> "PreprocSpec":
        if self.crop_to > self.resize_to:
            raise ConfigError(f"crop_to ({self.crop_to}) exceeds resize_to ({self.resize_to})")
        return self
