"""Shared fixtures: a small backbone geometry that keeps full CIL runs under a
few seconds, and the ``slow`` marker gate (APT_RUN_SLOW=1 enables it)."""
import numpy as np
import pytest

from config.settings import settings
from src.aptlab.data import SynthSpec, generate, split_stream
from src.aptlab.vit import ViTConfig, ViTModel


def pytest_collection_modifyitems(config, items):
    if settings.run_slow_tests:
        return
    skip_slow = pytest.mark.skip(reason="slow; set APT_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


SMALL = ViTConfig(image_size=8, channels=1, patch_size=4, depth=2, dim=16, heads=2, mlp_ratio=2)


@pytest.fixture
def small_config() -> ViTConfig:
    return SMALL


@pytest.fixture
def frozen_model() -> ViTModel:
    model = ViTModel.init(SMALL, seed=3)
    model.freeze()
    return model


@pytest.fixture
def small_spec() -> SynthSpec:
    return SynthSpec(n_classes=8, train_per_class=6, test_per_class=4, image_size=8,
                     noise_sigma=0.1, max_shift=1, seed=5, class_offset=8, grid=2)


@pytest.fixture
def small_stream(small_spec):
    train, test = generate(small_spec, "train"), generate(small_spec, "test")
    return split_stream(train, 2, seed=1, test=test)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
