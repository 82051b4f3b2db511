import numpy as np
import pytest

from recical.geometry import CouplingModel


@pytest.fixture
def coupling():
    """Default coupling fit used throughout: -20 dB between adjacent elements."""
    return CouplingModel(
        co_slope=-10.0,
        co_intercept=-12.0,
        cross_slope=-10.0,
        cross_intercept=-15.0,
        sigma2=1e-6,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
