"""Named-tensor container backing models and the SCLW weights file."""
from __future__ import annotations

import logging
from typing import Iterator, Mapping, MutableMapping, Optional

import numpy as np

from ..errors import ShapeError
from ..tensor import DTYPES

logger = logging.getLogger(__name__)

NON_TRAINABLE_SUFFIXES = (".moving_mean", ".moving_var")


def is_trainable_name(name: str) -> bool:
    return not name.endswith(NON_TRAINABLE_SUFFIXES)


class WeightStore(MutableMapping[str, np.ndarray]):
    """Ordered name → tensor map with a provenance note ("random-init" or "imported").

    Replacing an existing entry must keep its shape.
    """

    def __init__(self, tensors: Optional[Mapping[str, np.ndarray]] = None, provenance: str = "random-init"):
        self._tensors: dict[str, np.ndarray] = {}
        self.provenance = provenance
        for name, value in (tensors or {}).items():
            self[name] = value

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        arr = np.asarray(value)
        current = self._tensors.get(name)
        if current is not None and current.shape != arr.shape:
            raise ShapeError(f"weight {name!r}: shape {arr.shape} does not match stored {current.shape}")
        self._tensors[name] = arr

    def __delitem__(self, name: str) -> None:
        del self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def is_trainable(self, name: str) -> bool:
        return is_trainable_name(name)

    def trainable(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self._tensors.items() if is_trainable_name(k)}

    @property
    def n_params(self) -> int:
        return sum(int(v.size) for v in self._tensors.values())

    def astype(self, dtype: str) -> "WeightStore":
        dt = DTYPES[dtype]
        return WeightStore({k: v.astype(dt) for k, v in self._tensors.items()}, self.provenance)

    def copy(self) -> "WeightStore":
        return WeightStore({k: v.copy() for k, v in self._tensors.items()}, self.provenance)

    def __repr__(self) -> str:
        return f"<WeightStore {len(self)} tensors, {self.n_params} values, {self.provenance}>"
