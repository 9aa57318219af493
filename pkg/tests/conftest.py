import numpy as np
import pytest

import nbspatial as nbs


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def chaotic_params():
    return nbs.ModelParams(2.0, 0.6, 0.8)


@pytest.fixture
def crystal_params():
    return nbs.ModelParams(2.0, 0.05, 0.99)
