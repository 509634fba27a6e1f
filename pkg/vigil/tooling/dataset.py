"""Frame directories and the on-disk dataset layout.

    root/violent/<clip>/frame_00000.ppm
    root/nonviolent/<clip>/frame_00000.ppm

A clip may also be a single `.clp1` file in place of a frame directory.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from ..errors import DataError
from ..preproc import Clip
from ..train.data import LABELS, LabeledClips
from .formats import RANGE_UNIT, read_clp1

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FRAME_SUFFIXES = (".ppm", ".png")
FRAME_PATTERN = "frame_{:05d}.ppm"
METADATA_FILE = "metadata.jsonl"


def ingest_image_dir(path: PathLike) -> Clip:
    """Lexicographically ordered PPM (P6) / PNG frames → Clip with values / 255."""
    root = Path(path)
    if not root.is_dir():
        raise DataError(f"{root}: not a directory")
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)
    if not files:
        raise DataError(f"{root}: no .ppm or .png frames")
    frames = []
    size = None
    for f in files:
        try:
            with Image.open(f) as img:
                rgb = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
        except OSError as e:
            raise DataError(f"{f}: unreadable frame: {e}") from e
        if size is None:
            size = rgb.shape
        elif rgb.shape != size:
            raise DataError(f"{f}: frame size {rgb.shape[1]}×{rgb.shape[0]} differs from {size[1]}×{size[0]} of {files[0].name}")
        frames.append(rgb)
    return Clip(np.stack(frames), source_id=root.name)


def load_clip(path: PathLike) -> Clip:
    p = Path(path)
    if p.is_dir():
        return ingest_image_dir(p)
    frames, tag = read_clp1(p)
    if tag != RANGE_UNIT:
        raise DataError(f"{p}: holds a derived stream (range tag {tag}), not raw frames")
    return Clip(frames, source_id=p.stem)


def write_frames(frames: np.ndarray, directory: PathLike) -> None:
    """Write T×H×W×3 frames in [0, 1] as 8-bit binary PPMs."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    pixels = np.clip(np.rint(np.asarray(frames) * 255.0), 0, 255).astype(np.uint8)
    for t, frame in enumerate(pixels):
        Image.fromarray(frame).save(out / FRAME_PATTERN.format(t), format="PPM")


def write_dataset(data: LabeledClips, root: PathLike) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / METADATA_FILE, "w") as meta:
        for index, (clip, label, info) in enumerate(zip(data.clips, data.labels, data.metadata)):
            name = clip.source_id or f"clip{index:04d}"
            write_frames(clip.frames, root / LABELS[label] / name)
            meta.write(json.dumps({"clip": f"{LABELS[label]}/{name}", **info}) + "\n")
    logger.info("Wrote %d clips to %s", len(data), root)


def load_dataset(root: PathLike) -> LabeledClips:
    root = Path(root)
    clips, labels = [], []
    for label, name in enumerate(LABELS):
        class_dir = root / name
        if not class_dir.is_dir():
            continue
        for entry in sorted(class_dir.iterdir()):
            if entry.is_dir() or entry.suffix == ".clp1":
                clips.append(load_clip(entry))
                labels.append(label)
    if not clips:
        raise DataError(f"{root}: no clips under {'/ or '.join(LABELS)}/")
    data = LabeledClips(clips, np.array(labels))
    logger.info("Loaded %d clips from %s (%s)", len(data), root, data.counts())
    return data
