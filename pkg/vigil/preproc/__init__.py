"""Clip pre-processing: sampling, geometry, augmentation and the two stream inputs."""
from .clip import AugmentSpec, Clip, PreprocSpec
from .pipeline import clip_rng, model_frames, prepare_batch, prepare_streams
from .transforms import (
    augment,
    background_residual,
    background_suppress,
    center_crop,
    flip_horizontal,
    frame_difference,
    gaussian_blur,
    random_crop_resize,
    resize_bilinear,
    sample_indices,
    uniform_sample,
)

__all__ = [
    "AugmentSpec",
    "Clip",
    "PreprocSpec",
    "clip_rng",
    "model_frames",
    "prepare_batch",
    "prepare_streams",
    "augment",
    "background_residual",
    "background_suppress",
    "center_crop",
    "flip_horizontal",
    "frame_difference",
    "gaussian_blur",
    "random_crop_resize",
    "resize_bilinear",
    "sample_indices",
    "uniform_sample",
]
