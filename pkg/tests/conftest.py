import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cubevar.analytic import ResolutionWarning, make_phi, make_psi, make_theta

settings.register_profile(
    "ci",
    derandomize=True,
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture(autouse=True)
def _quiet_resolution_warnings():
    # many tests intentionally use coarse grids; the warning is exercised
    # explicitly in test_analytic
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        yield


@pytest.fixture(scope="session")
def phi_default():
    return make_phi(0.1, 32)


@pytest.fixture(scope="session")
def psi_default(phi_default):
    return make_psi(phi_default)


@pytest.fixture(scope="session")
def theta_default(phi_default):
    return make_theta(phi_default)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
