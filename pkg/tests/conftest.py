import numpy as np
import pytest

from lassodist import SeedSpec, build_ar_covariance, factor_covariance


@pytest.fixture(scope="session")
def ar_model_10():
    return build_ar_covariance(0.5, 10)


@pytest.fixture(scope="session")
def identity_model_40():
    return factor_covariance(np.eye(40))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def seed():
    return SeedSpec(2024)
