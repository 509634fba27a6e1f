"""Parameter initializers."""
from __future__ import annotations

import numpy as np


def fans(name: str, shape: tuple[int, ...]) -> tuple[int, int]:
    """(fan_in, fan_out) for a kernel, keyed on its layout.

    Depthwise kernels (K, K, C) act per channel, so both fans are K².
    """
    if len(shape) == 4:
        rf = shape[0] * shape[1]
        return rf * shape[2], rf * shape[3]
    if len(shape) == 3:
        rf = shape[0] * shape[1]
        return rf, rf
    if len(shape) == 2:
        return shape[0], shape[1]
    raise ValueError(f"no fan rule for {name!r} with shape {shape}")


def xavier_uniform(rng: np.random.Generator, name: str, shape: tuple[int, ...], dtype=np.float32) -> np.ndarray:
    fan_in, fan_out = fans(name, shape)
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def initial_value(rng: np.random.Generator, name: str, shape: tuple[int, ...], dtype=np.float32) -> np.ndarray:
    """Xavier for kernels, zeros for biases/beta/moving_mean, ones for gamma/moving_var."""
    leaf = name.rsplit(".", 1)[-1]
    if leaf in ("gamma", "moving_var"):
        return np.ones(shape, dtype=dtype)
    if leaf in ("bias", "beta", "moving_mean"):
        return np.zeros(shape, dtype=dtype)
    return xavier_uniform(rng, name, shape, dtype)
