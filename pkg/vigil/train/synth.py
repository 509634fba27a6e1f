"""Synthetic two-class motion clips for desk-scale training.

Every clip shows a few Gaussian blobs over a static textured background. Each
blob owns a short line segment of evenly spaced positions, one per frame.
Nonviolent-proxy clips walk the segment end to end (slow drift); violent-proxy
clips visit the same positions in a scrambled order that crosses the segment
midpoint on every frame. A violent clip is thus a reordering of its nonviolent
partner: the clip-mean image and the set of |frame − mean| maps agree, and
only frame-to-frame differences tell the two apart.
"""
from __future__ import annotations

import logging
from typing import Any

import numpy as np

from ..errors import DataError
from ..preproc import Clip
from .data import LabeledClips

logger = logging.getLogger(__name__)


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    """Smooth static texture in [0.15, 0.45]: a coarse random grid upsampled bilinearly."""
    coarse = rng.uniform(0.0, 1.0, size=(5, 5, 3))
    grid = np.linspace(0, 4, size)
    i0 = np.minimum(np.floor(grid).astype(int), 3)
    w = (grid - i0)[:, None, None]
    rows = coarse[i0] * (1 - w) + coarse[i0 + 1] * w
    wc = (grid - i0)[None, :, None]
    tex = rows[:, i0] * (1 - wc) + rows[:, i0 + 1] * wc
    return 0.15 + 0.3 * tex


def _render(bg: np.ndarray, centres: np.ndarray, colours: np.ndarray, radius: float) -> np.ndarray:
    size = bg.shape[0]
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    frame = bg.copy()
    for (cy, cx), colour in zip(centres, colours):
        bump = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * radius**2))
        frame = frame * (1 - bump[..., None]) + colour * bump[..., None]
    return np.clip(frame, 0.0, 1.0)


def _visit_order(rng: np.random.Generator, violent: bool, frames: int) -> np.ndarray:
    """Frame t shows segment position order[t]; violent orders alternate halves."""
    if not violent:
        return np.arange(frames)
    split = (frames + 1) // 2
    order = np.empty(frames, dtype=int)
    order[0::2] = rng.permutation(split)
    order[1::2] = split + rng.permutation(frames - split)
    return order


def _trajectory(
    scene: np.random.Generator, order_rng: np.random.Generator, violent: bool, frames: int, size: int, n_blobs: int
) -> tuple[np.ndarray, dict[str, Any]]:
    margin = size * 0.15
    radius = size / 12
    # segment stays well inside the frame for long clips
    step = min(scene.uniform(0.1, 0.18) * radius, 0.3 * size / max(frames - 1, 1))
    half = step * (frames - 1) / 2
    anchors = scene.uniform(margin + half, size - margin - half, size=(n_blobs, 2))
    angles = scene.uniform(0.0, 2 * np.pi, size=n_blobs)
    directions = np.stack([np.sin(angles), np.cos(angles)], axis=1)
    order = _visit_order(order_rng, violent, frames)
    offsets = (order - (frames - 1) / 2) * step
    path = anchors[None] + offsets[:, None, None] * directions[None]
    motion = {
        "motion": "erratic" if violent else "drift",
        "step": round(float(step), 4),
        "directions": angles.round(4).tolist(),
        "order": order.tolist(),
    }
    return path, motion


def make_synth(n: int, seed: int = 0, frames: int = 16, size: int = 64) -> LabeledClips:
    """n clips (n even), alternating violent/nonviolent, deterministic in seed.

    Clips 2k and 2k+1 share one scene (background, blobs, segments) and differ
    only in the order the segment positions are visited.
    """
    if n < 2 or n % 2:
        raise DataError(f"synthetic dataset size must be even and >= 2, got {n}")
    if frames < 2 or size < 8:
        raise DataError(f"synthetic clips need >= 2 frames and >= 8 pixels, got {frames}×{size}")
    clips, labels, meta = [], [], []
    for index in range(n):
        violent = index % 2 == 0
        scene = np.random.default_rng([seed, index // 2])
        n_blobs = int(scene.integers(2, 4))
        radius = size / 12
        bg = _background(scene, size)
        colours = scene.uniform(0.7, 1.0, size=(n_blobs, 3))
        order_rng = np.random.default_rng([seed, index, 1])
        path, motion = _trajectory(scene, order_rng, violent, frames, size, n_blobs)
        video = np.stack([_render(bg, path[t], colours, radius) for t in range(frames)]).astype(np.float32)
        source = f"synth-{seed}-{index:04d}"
        clips.append(Clip(video, source_id=source, fps=30.0))
        labels.append(1 if violent else 0)
        meta.append({"source_id": source, "label": "violent" if violent else "nonviolent",
                     "n_blobs": n_blobs, "radius": radius, "seed": seed, "index": index, **motion})
    logger.info("Generated %d synthetic clips (%d×%d×%d)", n, frames, size, size)
    return LabeledClips(clips, np.array(labels), meta)
