import numpy as np
import pytest

from atlasdiffeo.engine import compute_constants
from atlasdiffeo.oracles import (
    cylinder_oracle,
    flat_oracle,
    half_plane_oracle,
    scaled_flat_oracle,
)


@pytest.fixture(scope="session")
def flat1():
    return flat_oracle(d=1, r1=1.0, r2=0.75)


@pytest.fixture(scope="session")
def flat2():
    return flat_oracle(d=2, r1=1.0, r2=0.75)


@pytest.fixture(scope="session")
def scaled1():
    return scaled_flat_oracle(d=1, c=2.0, r1=1.0, r2=0.75)


@pytest.fixture(scope="session")
def cylinder():
    return cylinder_oracle()


@pytest.fixture(scope="session")
def half_plane():
    return half_plane_oracle()


@pytest.fixture(scope="session")
def flat1_constants(flat1):
    return compute_constants(flat1.spec, n=16, sigma=0.5)


@pytest.fixture(scope="session")
def cylinder_constants(cylinder):
    return compute_constants(cylinder.spec, n=8, sigma=0.5)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260821)
