import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_stochastic(K, rng, axis=0):
    """Column-stochastic K x K matrix."""
    P = rng.dirichlet(np.ones(K), size=K)
    return P.T if axis == 0 else P
