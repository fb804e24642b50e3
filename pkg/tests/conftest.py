import numpy as np
import pytest

from superburst.core import reference_params


@pytest.fixture
def nominal():
    return reference_params()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
