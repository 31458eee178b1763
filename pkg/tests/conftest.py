import numpy as np
import pytest


@pytest.fixture
def rng_np():
    # fixed-seed generator for test-local random inputs
    return np.random.default_rng(20240817)
