import numpy as np
import pytest
from hypothesis import settings

from cachenet.coverage import ChannelParams
from cachenet.popularity import ZipfLibrary, validate_placement

settings.register_profile("ci", derandomize=True, deadline=None, max_examples=80)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def params14():
    """Default channel: 0 dB threshold, alpha = 4."""
    return ChannelParams(T=1.0, alpha=4.0, lam=1.0)


@pytest.fixture(scope="session")
def lib2():
    return ZipfLibrary.zipf(2, 1.2, 1)


@pytest.fixture(scope="session")
def lib3():
    return ZipfLibrary.zipf(3, 1.2, 1)


@pytest.fixture(scope="session")
def b73(lib2):
    return validate_placement(np.array([0.7, 0.3]), 1)
