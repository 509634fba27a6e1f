"""Labeled clip collections and the train/validation split."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ..errors import DataError
from ..preproc import Clip

LABELS = ("nonviolent", "violent")


@dataclass
class LabeledClips:
    clips: list[Clip]
    labels: np.ndarray
    metadata: list[dict[str, Any]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.clips) != len(self.labels):
            raise DataError(f"{len(self.clips)} clips but {len(self.labels)} labels")
        if self.labels.size and not np.isin(self.labels, (0, 1)).all():
            raise DataError("labels must be 0 (nonviolent) or 1 (violent)")
        if not self.metadata:
            self.metadata = [{} for _ in self.clips]

    def __len__(self) -> int:
        return len(self.clips)

    def subset(self, indices: Sequence[int]) -> "LabeledClips":
        idx = list(indices)
        return LabeledClips([self.clips[i] for i in idx], self.labels[idx], [self.metadata[i] for i in idx])

    def flipped(self) -> "LabeledClips":
        return LabeledClips(list(self.clips), 1 - self.labels, list(self.metadata))

    def counts(self) -> dict[str, int]:
        return {name: int((self.labels == i).sum()) for i, name in enumerate(LABELS)}


def train_val_split(data: LabeledClips, val_fraction: float = 0.2, seed: int = 0) -> tuple[LabeledClips, LabeledClips]:
    """Seeded stratified split; each class contributes round(val_fraction · count) clips to validation."""
    if not 0.0 <= val_fraction < 1.0:
        raise DataError(f"val_fraction must be in [0, 1), got {val_fraction}")
    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    val_idx: list[int] = []
    for label in (0, 1):
        members = np.flatnonzero(data.labels == label)
        rng.shuffle(members)
        k = int(round(val_fraction * len(members)))
        val_idx.extend(members[:k].tolist())
        train_idx.extend(members[k:].tolist())
    return data.subset(sorted(train_idx)), data.subset(sorted(val_idx))
