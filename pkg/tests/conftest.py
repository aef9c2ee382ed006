"""Shared fixtures: tiny synthetic episodes and small encoding configs.

Everything here is sized for speed — short stable phases, 64-px images —
while exercising the same code paths as the full-scale defaults.
"""

import numpy as np
import pytest

from bedexit.imaging import EncodingConfig
from bedexit.signals import WindowSpec
from bedexit.synth import SynthConfig


@pytest.fixture(scope="session")
def tiny_synth() -> SynthConfig:
    """Six short episodes: ~7-16 min each instead of hours."""
    return SynthConfig(
        seed=7,
        n_episodes=6,
        stable_hours=(0.05, 0.15),
        transition_minutes=(1.0, 3.0),
        lead_in_s=120.0,
        tail_s=60.0,
    )


@pytest.fixture(scope="session")
def tiny_window_spec() -> WindowSpec:
    # 4 min look-back, 1 min stride; divides evenly at 25 Hz
    return WindowSpec(lookback_s=240.0, stride_s=60.0)


@pytest.fixture(scope="session")
def tiny_encoding() -> EncodingConfig:
    return EncodingConfig(series_len_n=64, image_size=32)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
