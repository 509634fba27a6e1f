"""AMSGrad optimizer and the step-halving learning-rate schedule."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Mapping, MutableMapping

import numpy as np

from ..errors import ConfigError, ShapeError

logger = logging.getLogger(__name__)

BiasCorrection = Literal["m_only", "both", "none"]


def lr_at_epoch(epoch: int, base_lr: float = 4e-4, floor: float = 5e-5, period: int = 5) -> float:
    """max(base · 0.5^⌊epoch/period⌋, floor)."""
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}")
    return max(base_lr * 0.5 ** (epoch // period), floor)


@dataclass
class OptState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    v_hat: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7


def init_state(params: Mapping[str, np.ndarray], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-7) -> OptState:
    def zeros() -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in params.items()}

    return OptState(zeros(), zeros(), zeros(), 0, beta1, beta2, eps)


def amsgrad_step(
    params: MutableMapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: OptState,
    lr: float,
    bias_correction: BiasCorrection = "m_only",
) -> None:
    """One AMSGrad update of every parameter that has a gradient.

    m ← β1·m + (1−β1)·g;  v ← β2·v + (1−β2)·g²;  v̂ ← max(v̂, v)
    p ← p − lr · m̂ / (√v̂' + eps), where m̂ and v̂' are bias-corrected per mode.
    Parameters are replaced, never written in place.
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t if bias_correction in ("m_only", "both") else 1.0
    c2 = 1.0 - b2**t if bias_correction == "both" else 1.0
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
            state.v_hat[name] = np.zeros_like(p)
        m = b1 * state.m[name] + (1 - b1) * g
        v = b2 * state.v[name] + (1 - b2) * (g * g)
        v_hat = np.maximum(state.v_hat[name], v)
        state.m[name], state.v[name], state.v_hat[name] = m, v, v_hat
        update = (m / c1) / (np.sqrt(v_hat / c2) + state.eps)
        params[name] = (p - lr * update).astype(p.dtype, copy=False)


class AMSGrad:
    """Stateful wrapper: holds the moments between calls to `step`."""

    def __init__(
        self,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-7,
        bias_correction: BiasCorrection = "m_only",
    ):
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ConfigError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
        self.bias_correction = bias_correction
        self.state = OptState(beta1=beta1, beta2=beta2, eps=eps)

    def step(self, params: MutableMapping[str, np.ndarray], grads: Mapping[str, np.ndarray], lr: float) -> None:
        amsgrad_step(params, grads, self.state, lr, self.bias_correction)
        if not all(math.isfinite(float(np.abs(g).max(initial=0.0))) for g in grads.values()):
            logger.warning("Non-finite gradient at step %d", self.state.step)
