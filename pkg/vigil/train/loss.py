"""Binary cross-entropy in logit form."""
from __future__ import annotations

import numpy as np

P_CLIP = 1e-12


def bce_with_logits(z, y) -> np.ndarray:
    """Elementwise −[y log σ(z) + (1−y) log(1−σ(z))] without forming σ(z)."""
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))


def logit(p) -> np.ndarray:
    p = np.clip(np.asarray(p, dtype=np.float64), P_CLIP, 1 - P_CLIP)
    return np.log(p) - np.log1p(-p)


def bce_loss(p, y) -> float:
    """Mean binary cross-entropy of probabilities p against labels y ∈ {0, 1}."""
    return float(np.mean(bce_with_logits(logit(p), y)))
