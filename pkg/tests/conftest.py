"""Shared fixtures and hypothesis settings for the suite."""

from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from solarbnn import device as dev
from solarbnn import tile as tl

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def ideal_pctx():
    """Programming context with zero spread: resistances land on medians."""
    return tl.ProgramContext(dev.IDEAL_VARIABILITY, np.random.default_rng(0))


@pytest.fixture
def noisy_pctx():
    """Programming context with the default lognormal spreads."""
    return tl.ProgramContext(dev.DeviceVariability(), np.random.default_rng(7))


@pytest.fixture
def fixture_paths():
    return {
        "images": FIXTURES / "desk_images.idx",
        "labels": FIXTURES / "desk_labels.idx",
        "model": FIXTURES / "desk_model.txt",
    }
