import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from photon_bec.core import ModelParams, dye_cavity_params
from photon_bec.meanfield import pump_for_target_n
from photon_bec.moments import moment_steady_state

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def at_target(params: ModelParams, n: float) -> ModelParams:
    return params.replace(gamma_up=pump_for_target_n(params, n))


@pytest.fixture(scope="session")
def dye():
    return dye_cavity_params()


@pytest.fixture(scope="session")
def dye_4620(dye):
    return at_target(dye, 4620.0)


@pytest.fixture(scope="session")
def dye_17100(dye):
    return at_target(dye, 17100.0)


@pytest.fixture(scope="session")
def small():
    """M = 100 system with mean-field photon number 20."""
    base = ModelParams(M=100, kappa=1.0, B_em=0.05, B_abs=0.0025)
    return at_target(base, 20.0)


@pytest.fixture(scope="session")
def small_moments(small):
    return moment_steady_state(small)


@pytest.fixture(scope="session")
def small_oracle(small):
    from photon_bec.oracle import solve_oracle

    return solve_oracle(small)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _strict_runtime_warnings():
    # numerical warnings inside the package should surface as failures
    with warnings.catch_warnings():
        warnings.simplefilter("error", RuntimeWarning)
        yield
