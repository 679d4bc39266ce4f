import numpy as np
import pytest

from mbpilab import stable_model


@pytest.fixture(scope="session")
def g025():
    """Canonical positive-recurrent pairing: gamma = 0.25."""
    return stable_model(nu=0.5, c=1.0, delta=0.75, d=0.25)


@pytest.fixture(scope="session")
def gneg():
    """Canonical transient pairing: gamma = -0.25, mu = 0.25, d/c = |gamma|."""
    return stable_model(nu=0.75, c=1.0, delta=0.5, d=0.25)


@pytest.fixture(scope="session")
def gneg_pert():
    """Transient pairing with a genuine immigration-tail remainder."""
    return stable_model(nu=0.75, c=1.0, delta=0.5, d=0.25,
                        kappa_immigration=1.0)


@pytest.fixture(scope="session")
def g025_pert_off():
    """Recurrent pairing with perturbed offspring tail L(x) = 1 + x**-0.5."""
    return stable_model(nu=0.5, c=1.0, delta=0.75, d=0.25,
                        kappa_offspring=1.0)


@pytest.fixture(scope="session")
def g025_pert_imm():
    """Recurrent pairing with perturbed immigration tail."""
    return stable_model(nu=0.5, c=1.0, delta=0.75, d=0.25,
                        kappa_immigration=0.2)


@pytest.fixture(scope="session")
def g025_small():
    """Short-truncation variant for simulation-heavy tests."""
    return stable_model(nu=0.5, c=1.0, delta=0.75, d=0.25, J=500)


@pytest.fixture
def rng():
    return np.random.default_rng(20240801)
