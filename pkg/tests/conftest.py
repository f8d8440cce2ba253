import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ci",
    derandomize=True,
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def hcdr():
    from cablearm.model import builtin_hcdr9dof

    return builtin_hcdr9dof()


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240801)
