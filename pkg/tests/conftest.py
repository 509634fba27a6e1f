import numpy as np
import pytest

from vigil.nn import ModelConfig, variant_config
from vigil.nn.backbone import BackboneSpec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_cfg() -> ModelConfig:
    """Two-stream model small enough for per-test forwards."""
    return ModelConfig(
        backbone=BackboneSpec(kind="tiny", tiny_widths=[4, 8], input_size=16),
        lstm_filters=6,
        fusion="M",
        head=[8, 1],
        n_frames=4,
    )


@pytest.fixture
def tiny_m() -> ModelConfig:
    return variant_config("tiny_m")
