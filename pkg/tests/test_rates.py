import numpy as np
import pytest

from cavity_et import oracle, rates
from cavity_et.model import ModelParams
from cavity_et.overlaps import overlap_table
from cavity_et.rates import (
    RateBreakdown,
    bright_channel,
    dark_channel,
    grid_breakdowns,
    propagator,
    rate_table,
    transfer_rate,
)
from cavity_et.spectra import ExceptionalPointError, bright_block, dark_block

from conftest import random_params


def test_propagator_equal_energies_is_minus_lifetime():
    gamma = 0.004
    e = 0.2 - 0.5j * gamma
    assert propagator(e, e) == pytest.approx(-1.0 / gamma)


def test_propagator_two_decay_rates():
    g1, g2 = 0.3, 0.7
    assert propagator(-0.5j * g1, -0.5j * g2) == pytest.approx(-2.0 / (g1 + g2))


def test_propagator_general_substitution():
    w1, g1, w2, g2 = 0.3, 0.02, -0.1, 0.5
    expected = 1.0 / (1j * (w1 - w2) - 0.5 * (g1 + g2))
    assert propagator(w1 - 0.5j * g1, w2 - 0.5j * g2) == pytest.approx(expected)


def test_propagator_rejects_non_decaying_pair():
    with pytest.raises(ZeroDivisionError):
        propagator(0.3 + 0.0j, 0.3 + 0.0j)


def test_bright_channel_vanishes_without_pump(small_system_params):
    p = small_system_params.replace(kappa_plus=0.0, gamma_plus=0.0)
    sys = bright_block(p, 8)
    table = overlap_table(sys, dark_block(p))
    assert bright_channel(p, 8, table, sys) == 0.0


def test_bright_channel_vanishes_for_decoupled_cavity_pump(small_system_params):
    # photons cannot convert into donor excitations at g = 0
    p = small_system_params.replace(g=0.0, gamma_plus=0.0)
    sys = bright_block(p, 8)
    table = overlap_table(sys, dark_block(p))
    assert abs(bright_channel(p, 8, table, sys)) < 1e-25


def test_dark_channel_zero_for_single_pair(small_system_params):
    p = small_system_params
    sys = bright_block(p, 1)
    table = overlap_table(sys, None)
    assert dark_channel(p, 1, table, dark_block(p)) == 0.0


def test_dark_channel_zero_without_pair_pump(small_system_params):
    p = small_system_params.replace(gamma_plus=0.0)
    dark = dark_block(p)
    table = overlap_table(bright_block(p, 8), dark)
    assert dark_channel(p, 8, table, dark) == 0.0


def test_channels_match_superoperator_oracle(small_system_params):
    b = transfer_rate(small_system_params, 4)
    ref = oracle.brute_force_rate(small_system_params, 4)
    assert b.r_tot == pytest.approx(ref, rel=1e-10)


def test_breakdown_invariants_random():
    rng = np.random.default_rng(21)
    for _ in range(25):
        p = random_params(rng)
        M = int(rng.integers(1, 60))
        b = transfer_rate(p, M)
        assert b.r_tot >= -1e-12
        assert b.r_cav >= -1e-12 and b.r_ind >= -1e-12 and b.r_bare >= -1e-12
        assert b.r_tot == pytest.approx(b.r_cav + b.r_ind, rel=1e-12)
        assert b.imag_residual <= 1e-10 * max(b.r_tot, 1e-300)


def test_pump_linearity(small_system_params):
    p = small_system_params
    full = transfer_rate(p, 8).r_tot
    cav = transfer_rate(p.replace(gamma_plus=0.0), 8).r_tot
    ind = transfer_rate(p.replace(kappa_plus=0.0), 8).r_tot
    assert full == pytest.approx(cav + ind, rel=1e-12)
    doubled = transfer_rate(p.replace(kappa_plus=2 * p.kappa_plus, gamma_plus=0.0), 8).r_tot
    assert doubled == pytest.approx(2 * cav, rel=1e-12)


def test_bare_channel_definition(operating_point):
    p = operating_point.replace(g=0.0, kappa_plus=0.0)
    b = transfer_rate(p, 500)
    assert b.r_tot == pytest.approx(b.r_bare, rel=1e-13)
    assert b.r_tot == pytest.approx(b.r_ind, rel=1e-13)
    assert b.r_cav == 0.0


def test_rate_table_single_entry(operating_point):
    table = rate_table(operating_point, 1)
    assert len(table.M) == 1
    b = table.breakdown(1)
    ref = transfer_rate(operating_point, 1)
    assert b.r_tot == pytest.approx(ref.r_tot, rel=1e-12)
    # no dark states at M = 1: individual channel comes from bright states only
    assert b.r_ind == pytest.approx(ref.r_ind, rel=1e-12)


def test_rate_table_spot_checks_scalar_path(operating_point):
    table = rate_table(operating_point, 2000)
    rng = np.random.default_rng(5)
    for M in rng.integers(1, 2001, size=10):
        b = table.breakdown(int(M))
        ref = transfer_rate(operating_point, int(M))
        assert b.r_tot == pytest.approx(ref.r_tot, rel=1e-10)
        assert b.r_cav == pytest.approx(ref.r_cav, rel=1e-10)
        assert b.r_bare == pytest.approx(ref.r_bare, rel=1e-10)


def test_cavity_channel_collective_coupling_invariance(operating_point):
    # only sqrt(M) g enters the cavity channel: same g_c, same r_cav
    a = transfer_rate(operating_point.replace(g=0.02), 100).r_cav
    b = transfer_rate(operating_point.replace(g=0.002), 10_000).r_cav
    assert a == pytest.approx(b, rel=1e-10)


def test_cavity_channel_vanishes_in_both_coupling_limits(pump_sweep_params):
    gc = np.geomspace(1e-3, 1.0, 48)
    M = 10_000.0
    out = grid_breakdowns(1.0, 1e-3, 3e-7, 3e-11, 1e-2, 0.2, 0.1, gc / np.sqrt(M), M)
    peak = out["r_cav"].max()
    weak = transfer_rate(pump_sweep_params.replace(g=1e-6 / 100.0), 10_000)
    assert weak.r_cav < 1e-6 * peak
    # suppression in the diverging-coupling limit falls off as 1/g_c^2; at
    # g_c = 1e3 the residual acceptor-like photon weight leaves ~1.2e-6 of
    # the peak, decaying a further hundredfold per decade of g_c
    strong = transfer_rate(pump_sweep_params.replace(g=1e3 / 100.0), 10_000)
    assert strong.r_cav < 2e-6 * peak
    stronger = transfer_rate(pump_sweep_params.replace(g=1e4 / 100.0), 10_000)
    assert stronger.r_cav < 1e-7 * peak


def test_flat_dark_transfer_without_cavity_pump(pump_sweep_params):
    gc = np.geomspace(1e-3, 1.0, 64)
    M = 10_000.0
    out = grid_breakdowns(1.0, 0.0, 3e-7, 3e-11, 1e-2, 0.2, 0.1, gc / np.sqrt(M), M)
    r = out["r_tot"]
    assert r.max() / r.min() < 1.1


def test_grid_matches_scalar_path():
    rng = np.random.default_rng(33)
    ps = [random_params(rng) for _ in range(6)]
    M = np.array([1.0, 2.0, 7.0, 40.0, 40.0, 513.0])
    out = grid_breakdowns(
        np.array([p.kappa for p in ps]), np.array([p.kappa_plus for p in ps]),
        np.array([p.gamma for p in ps]), np.array([p.gamma_plus for p in ps]),
        np.array([p.eta for p in ps]), np.array([p.delta for p in ps]),
        np.array([p.V for p in ps]), np.array([p.g for p in ps]), M)
    for i, p in enumerate(ps):
        ref = transfer_rate(p, int(M[i]))
        assert out["r_tot"][i] == pytest.approx(ref.r_tot, rel=1e-10)
        assert out["r_bare"][i] == pytest.approx(ref.r_bare, rel=1e-10)
        assert not out["flag_ep"][i]


def test_exceptional_point_raises_scalar_and_flags_grid():
    # dark-block defective point: |V| = (gamma - eta)/4 at delta = 0
    p = ModelParams(g=0.05, kappa=1.0, kappa_plus=1e-3, gamma=1.0, gamma_plus=1e-3,
                    eta=0.5, delta=0.0, V=0.125, N_total=4)
    with pytest.raises(ExceptionalPointError):
        transfer_rate(p, 4)
    table = rate_table(p, 4)
    assert table.flag_ep.all()
    assert np.isnan(table.r_tot).all()
    with pytest.raises(ExceptionalPointError):
        table.breakdown(2)


def test_transfer_rate_requires_positive_M(operating_point):
    with pytest.raises(ValueError):
        transfer_rate(operating_point, 0)


def test_breakdown_is_frozen_record(operating_point):
    b = transfer_rate(operating_point, 3)
    assert isinstance(b, RateBreakdown)
    with pytest.raises(Exception):
        b.r_tot = 0.0
