import numpy as np
import pytest

from cavity_et import dynamics, oracle, rates
from cavity_et.model import ModelParams

from conftest import random_params


def test_rate_vanishes_without_source(small_system_params):
    p = small_system_params.replace(kappa_plus=0.0, gamma_plus=0.0)
    assert oracle.brute_force_rate(p, 3) == 0.0


def test_rate_linear_in_source(small_system_params):
    p = small_system_params.replace(gamma_plus=0.0)
    one = oracle.brute_force_rate(p, 2)
    two = oracle.brute_force_rate(p.replace(kappa_plus=2 * p.kappa_plus), 2)
    assert two == pytest.approx(2.0 * one, rel=1e-13)


def test_rate_positive_and_matches_formula():
    rng = np.random.default_rng(101)
    for _ in range(5):
        for M in (1, 2, 3, 4):
            p = random_params(rng, n_pairs=M)
            ref = oracle.brute_force_rate(p, M)
            assert ref > 0.0
            assert rates.transfer_rate(p, M).r_tot == pytest.approx(ref, rel=1e-8)


def test_rate_invariant_under_pair_relabeling(small_system_params):
    block = oracle.excited_block(small_system_params, 3)
    d = 2 * 3 + 1
    perm = np.array([0, 2, 3, 1, 5, 6, 4])  # photon fixed, pairs cycled
    P = np.eye(d)[perm]
    h = P @ block.h_matrix @ P.T
    K = -1j * (np.kron(h, np.eye(d)) - np.kron(np.eye(d), h.conj()))
    S = np.diag((P @ block.source_weights).astype(complex))
    X = np.linalg.solve(K, S.reshape(-1)).reshape(d, d)
    r_perm = float(-np.dot(P @ block.sink_weights, np.real(np.diag(X))))
    assert r_perm == pytest.approx(oracle.brute_force_rate(small_system_params, 3), rel=1e-12)


def test_rate_caps_system_size(small_system_params):
    with pytest.raises(ValueError):
        oracle.brute_force_rate(small_system_params, 5)


def test_excited_block_structure(small_system_params):
    block = oracle.excited_block(small_system_params, 4)
    h = block.h_matrix
    assert np.array_equal(h, h.T)
    assert h[0, 0] == -0.5j * small_system_params.kappa
    assert np.allclose(np.diag(h)[1:5], -0.5j * small_system_params.gamma)
    assert np.allclose(np.diag(h)[5:],
                       small_system_params.delta - 0.5j * small_system_params.eta)


def test_dense_initial_condition(small_system_params):
    p = small_system_params.replace(N_total=2)
    res = oracle.dense_lindblad_integrate(p, 2, [0.0, 1.0])
    assert res.n_g[0] == pytest.approx(2.0, abs=1e-12)
    assert res.n_f[0] == pytest.approx(0.0, abs=1e-12)
    assert res.n_e[0] == pytest.approx(0.0, abs=1e-12)


def test_dense_absorbing_limit():
    # strong pumping and relaxation: all population ends in the product state
    p = ModelParams(g=0.3, kappa=1.0, kappa_plus=0.05, gamma=0.01, gamma_plus=0.05,
                    eta=0.2, delta=0.0, V=0.2, N_total=1)
    res = oracle.dense_lindblad_integrate(p, 1, np.geomspace(1.0, 2e3, 9))
    assert res.n_f[-1] == pytest.approx(1.0, abs=1e-3)
    assert res.trace_error < 1e-10
    assert res.hermiticity_error < 1e-12
    assert res.min_eigenvalue > -1e-8


def test_dense_conservation_two_pairs(small_system_params):
    p = small_system_params.replace(N_total=2, kappa_plus=1e-3, g=0.2 / np.sqrt(2))
    res = oracle.dense_lindblad_integrate(p, 2, np.geomspace(1e2, 2e6, 12))
    assert res.trace_error < 1e-10
    assert res.hermiticity_error < 1e-12
    assert res.min_eigenvalue > -1e-8
    assert np.all(np.diff(res.n_g) <= 1e-10)  # monotone depletion
    assert np.all(res.n_g + res.n_f <= 2.0 + 1e-9)


def test_dense_short_span_three_pairs(small_system_params):
    p = small_system_params.replace(N_total=3, g=0.2 / np.sqrt(3))
    res = oracle.dense_lindblad_integrate(p, 3, np.linspace(0.0, 200.0, 5))
    assert res.trace_error < 1e-7   # adaptive integration, short span
    assert res.n_g[0] == pytest.approx(3.0, abs=1e-10)
    assert np.all(np.diff(res.n_g) <= 1e-7)


def test_dense_caps_system_size(small_system_params):
    with pytest.raises(ValueError):
        oracle.dense_lindblad_integrate(small_system_params.replace(N_total=4), 4, [0.0, 1.0])


def test_elimination_validity_two_pairs(small_system_params):
    """Dense master equation vs eliminated dynamics while <N_e> stays tiny."""
    p = small_system_params.replace(N_total=2, g=0.2 / np.sqrt(2), kappa_plus=2e-4)
    table = rates.rate_table(p, 2)
    t_end = 3.0 / table.r_tot[0]
    grid = np.geomspace(10.0, t_end, 24)
    dense = oracle.dense_lindblad_integrate(p, 2, grid)
    eff = dynamics.mean_ground_population(table, grid)
    assert dense.n_e.max() < 1e-3
    rel = np.abs(dense.n_g - eff) / dense.n_g
    assert rel.max() < 0.02
