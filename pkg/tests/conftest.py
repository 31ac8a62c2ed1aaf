import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from usertopics import _kernels

settings.register_profile(
    "default",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # JIT compilation must not land inside timed acceptance sections
    _kernels.warmup()


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
