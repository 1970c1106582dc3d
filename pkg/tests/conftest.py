import numpy as np
import pytest
from scipy.optimize import brentq

from mflab.car import build_fock_context
from mflab.definitions import bcs_model, density_model


@pytest.fixture
def site():
    """A single site with two spins."""
    return build_fock_context(1, 0, ("up", "down"))


@pytest.fixture
def ring():
    """The three-site ring with two spins."""
    return build_fock_context(1, 1, ("up", "down"))


@pytest.fixture
def spinless_ring():
    return build_fock_context(1, 1, ("up",))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def bcs():
    return bcs_model(2.0, mu=0.5)


@pytest.fixture
def repulsive_toy():
    """Base -n_up with one repulsive density term of weight one."""
    return density_model(1.0, field=-1.0, spin="up")


@pytest.fixture
def bcs_branch():
    """Closed-form single-site BCS ordered branch: (xi, |Delta|) with xi = g tanh(beta xi / 2)."""
    def solve(coupling: float, mu: float, beta: float) -> tuple[float, float]:
        xi = brentq(lambda x: x - coupling * np.tanh(beta * x / 2), 1e-6, coupling + 1.0)
        return xi, np.sqrt(xi ** 2 - mu ** 2) / (2 * coupling)
    return solve
