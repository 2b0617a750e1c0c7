import numpy as np
import pytest

from synamap import make_synthetic_digits


@pytest.fixture(scope="session")
def tiny_digits():
    """Small balanced dataset shared by tests that just need digit data."""
    return make_synthetic_digits(600, 300, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
