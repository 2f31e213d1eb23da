import math

import pytest

from cavity_et.model import (
    ModelParams,
    ParameterError,
    collective_coupling,
    params_from_dict,
    validate,
)


def test_figure_defaults_accepted(pump_sweep_params):
    assert validate(pump_sweep_params) is pump_sweep_params


def test_validate_is_idempotent(pump_sweep_params):
    once = validate(pump_sweep_params)
    assert validate(once) is once


@pytest.mark.parametrize("field,value", [
    ("kappa", 0.0),
    ("eta", 0.0),
    ("gamma", -1e-3),
    ("kappa_plus", -1.0),
    ("delta", float("nan")),
])
def test_invalid_fields_rejected(pump_sweep_params, field, value):
    bad = pump_sweep_params.replace(**{field: value})
    with pytest.raises(ParameterError, match=field):
        validate(bad)


def test_empty_system_rejected(pump_sweep_params):
    with pytest.raises(ParameterError, match="N_total"):
        validate(pump_sweep_params.replace(N_total=0))


def test_negative_detuning_and_tunneling_allowed(pump_sweep_params):
    validate(pump_sweep_params.replace(delta=-0.4, V=-0.1))


def test_collective_coupling_values(pump_sweep_params):
    assert collective_coupling(pump_sweep_params.replace(g=0.1), 4) == pytest.approx(0.2)
    assert collective_coupling(pump_sweep_params.replace(g=0.37), 0) == 0.0
    # nanocrystal cut: g = 2e-3 at M = 1e4 gives g_c = 0.2
    assert collective_coupling(pump_sweep_params, 10_000) == pytest.approx(0.2, rel=1e-15)


def test_collective_coupling_rescaling_invariance(pump_sweep_params):
    # g sqrt(M) == (g sqrt(2)) sqrt(M/2) for even M, up to rounding
    g = 0.0173
    for M in (2, 8, 5000):
        a = collective_coupling(pump_sweep_params.replace(g=g), M)
        b = collective_coupling(pump_sweep_params.replace(g=g * math.sqrt(2)), M // 2)
        assert a == pytest.approx(b, rel=1e-14)


def test_params_from_dict_roundtrip(pump_sweep_params):
    doc = {
        "g": 2e-3, "kappa": 1.0, "kappa_plus": 1e-3, "gamma": 3e-7,
        "gamma_plus": 3e-11, "eta": 1e-2, "delta": 0.2, "V": 0.1,
        "N_total": 10000,
        "unit": "kappa0", "seed": 7, "t_max": 1e8, "n_trajectories": 100, "dt": 0.01,
    }
    assert params_from_dict(doc) == pump_sweep_params


def test_params_from_dict_rejects_unknown_key():
    doc = {"g": 0.1, "kappa": 1.0, "kapa_plus": 0.0}
    with pytest.raises(ParameterError, match="kapa_plus"):
        params_from_dict(doc)


def test_params_from_dict_rejects_missing_key():
    with pytest.raises(ParameterError, match="missing"):
        params_from_dict({"g": 0.1})


def test_params_from_dict_integer_pair_count():
    doc = {"g": 0.1, "kappa": 1.0, "kappa_plus": 0.0, "gamma": 0.0,
           "gamma_plus": 0.0, "eta": 0.01, "delta": 0.0, "V": 0.1, "N_total": 8.0}
    assert params_from_dict(doc).N_total == 8
    doc["N_total"] = 8.5
    with pytest.raises(ParameterError, match="N_total"):
        params_from_dict(doc)
