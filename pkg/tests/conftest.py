import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fragclt.dislocation import MeasureSpec, waiting_law

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# closed forms for the reference measure (uniform proportions on [0.3, 0.7])
C = 0.3
A = -math.log(0.7)
B = -math.log(0.3)


@pytest.fixture(scope="session")
def spec():
    return MeasureSpec.binary_uniform(C)


@pytest.fixture(scope="session")
def law(spec):
    return waiting_law(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
