import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dualframes.operators import make_rng

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return make_rng(20240611, 0)


def ket(label):
    return {
        "0": np.array([1, 0], dtype=complex),
        "1": np.array([0, 1], dtype=complex),
        "+": np.array([1, 1], dtype=complex) / np.sqrt(2),
    }[label]


def dm(label):
    v = ket(label)
    return np.outer(v, v.conj())
