import numpy as np
import pytest

from cavity_et.model import ModelParams


@pytest.fixture
def pump_sweep_params():
    """Large-ensemble defaults used by the pump-sweep figures (N = 1e4)."""
    return ModelParams(g=2e-3, kappa=1.0, kappa_plus=1e-3, gamma=3e-7,
                       gamma_plus=3e-11, eta=1e-2, delta=0.2, V=0.1, N_total=10000)


@pytest.fixture
def small_system_params():
    """Small-system validity-test defaults (N = 8, g_c = 0.2)."""
    return ModelParams(g=0.2 / np.sqrt(8), kappa=1.0, kappa_plus=1e-2, gamma=3e-7,
                       gamma_plus=3e-7 / 6, eta=1e-2, delta=0.2, V=0.1, N_total=8)


@pytest.fixture
def operating_point():
    """Nanocrystal-scale operating point: g_c = 0.2, both pumps at 1e-3 ratio."""
    return ModelParams(g=2e-3, kappa=1.0, kappa_plus=1e-3, gamma=3e-7,
                       gamma_plus=3e-10, eta=1e-2, delta=0.2, V=0.1, N_total=10000)


def random_params(rng, n_pairs=4):
    lo, hi = np.log(1e-4), np.log(1.0)
    g, kappa, kappa_plus, gamma, gamma_plus, eta = np.exp(rng.uniform(lo, hi, 6))
    delta, V = rng.uniform(-0.5, 0.5, 2)
    return ModelParams(g=g, kappa=kappa, kappa_plus=kappa_plus, gamma=gamma,
                       gamma_plus=gamma_plus, eta=eta, delta=delta, V=V,
                       N_total=n_pairs)
