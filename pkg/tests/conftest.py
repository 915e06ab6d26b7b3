import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gcot.core import DiscreteDensity
from gcot.halffill import diamond_geometry

settings.register_profile("repro", derandomize=True, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repro")


@pytest.fixture
def diamond():
    return DiscreteDensity(diamond_geometry(0.7), np.full(6, 0.5))


@pytest.fixture
def unit_pair():
    return DiscreteDensity(np.array([[0.0], [1.0]]), np.array([1.0, 1.0]))
