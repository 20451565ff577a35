import numpy as np
import pytest

from chpersist.dynamics import State, evolve, initial_state
from chpersist.spectral import Grid


@pytest.fixture(scope="session")
def sech_run():
    """Default sech preset (L=60, N=4096) to T=2 with snapshots every 0.01."""
    return evolve(initial_state("sech"), 2.0, output_every=0.01)


@pytest.fixture(scope="session")
def sech_run_short(sech_run):
    return sech_run.truncated(1.0)


@pytest.fixture(scope="session")
def bump_run():
    return evolve(initial_state("bump"), 0.05, output_every=0.05)


@pytest.fixture(scope="session")
def zero_run():
    return evolve(initial_state("zero", Grid(30.0, 256)), 0.5, output_every=0.01)


@pytest.fixture(scope="session")
def ch_run():
    """Single-component reduction: rho identically zero."""
    return evolve(initial_state("sech", amplitude_rho=0.0), 0.5, output_every=0.01)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
