"""Tensor value type: a dense channels-last numpy array with checked rank and dtype."""
from __future__ import annotations

import numpy as np

from ..errors import ShapeError

# Tensors are plain ndarrays; this alias documents intent at call sites.
Tensor = np.ndarray

DTYPES: dict[str, type] = {"f32": np.float32, "f64": np.float64}


def as_tensor(data, dtype: str | None = None) -> Tensor:
    """Validate (and optionally cast) a public tensor value.

    Rank must be 1..4 and every extent at least 1. The returned array is
    C-contiguous and never aliases a caller buffer that is later mutated by
    library code.
    """
    arr = np.asarray(data)
    if dtype is not None:
        if dtype not in DTYPES:
            raise ShapeError(f"unsupported dtype {dtype!r}; expected one of {sorted(DTYPES)}")
        arr = arr.astype(DTYPES[dtype], copy=False)
    elif arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32)
    if not 1 <= arr.ndim <= 4:
        raise ShapeError(f"tensor rank must be 1..4, got shape {arr.shape}")
    if any(d < 1 for d in arr.shape):
        raise ShapeError(f"tensor extents must be >= 1, got shape {arr.shape}")
    return np.ascontiguousarray(arr)
