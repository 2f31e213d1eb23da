import json
import math
from pathlib import Path

import numpy as np
import pytest

from cavity_et import cli, rates, validation


def write_config(tmp_path, name="params.json", **overrides):
    doc = {"g": 2e-3, "kappa": 1.0, "kappa_plus": 1e-3, "gamma": 3e-7,
           "gamma_plus": 3e-10, "eta": 1e-2, "delta": 0.2, "V": 0.1,
           "N_total": 10000}
    doc.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def run_cli(argv):
    return cli.main(argv)


def test_rate_reports_enhancement(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert run_cli(["rate", "--config", cfg]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["M"] == 10000
    assert 2.0 <= doc["r_cav"] / doc["r_bare"] <= 3.0
    # 17-significant-digit serialization round-trips exactly
    ref = rates.transfer_rate(
        __import__("cavity_et").params_from_dict(json.loads(Path(cfg).read_text())), 10000)
    assert doc["r_tot"] == ref.r_tot


def test_rate_zero_for_decoupled_cavity_pump(tmp_path, capsys):
    cfg = write_config(tmp_path, g=0.0, gamma_plus=0.0)
    assert run_cli(["rate", "--config", cfg]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["r_tot"] == 0.0


def test_malformed_key_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"g": 0.1, "kapppa": 1.0}))
    with pytest.raises(SystemExit) as info:
        run_cli(["rate", "--config", str(path)])
    assert info.value.code == 2
    assert "kapppa" in capsys.readouterr().err


def test_exceptional_point_exits_3(tmp_path, capsys):
    cfg = write_config(tmp_path, gamma=1.0, eta=0.5, V=0.125, delta=0.0, N_total=4)
    with pytest.raises(SystemExit) as info:
        run_cli(["rate", "--config", cfg])
    assert info.value.code == 3


def test_sweep_single_cell(tmp_path):
    spec = {
        "fixed": json.loads(Path(write_config(tmp_path)).read_text()),
        "axis1": {"name": "g_c", "values": [0.2]},
        "axis2": {"name": "kappa_plus", "values": [1e-3]},
    }
    cfg = tmp_path / "sweep.json"
    cfg.write_text(json.dumps(spec))
    out = tmp_path / "sweep.csv"
    assert run_cli(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "axis1,axis2,r_tot,r_cav,r_ind,r_bare,flag"
    assert len(lines) == 2
    cells = lines[1].split(",")
    assert float(cells[0]) == 0.2
    assert 2.0 <= float(cells[3]) / float(cells[5]) <= 3.0
    assert cells[6] == ""


def test_sweep_axis_order_and_ep_flag(tmp_path):
    spec = {
        "fixed": json.loads(Path(write_config(tmp_path, N_total=4,
                                              gamma=1.0, eta=0.5, delta=0.0)).read_text()),
        "axis1": {"name": "V", "values": [0.125, 0.2]},
        "axis2": {"name": "g_c", "scale": "log", "min": 0.1, "max": 0.2, "count": 2},
    }
    cfg = tmp_path / "sweep.json"
    cfg.write_text(json.dumps(spec))
    out = tmp_path / "sweep.csv"
    assert run_cli(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    lines = out.read_text().strip().splitlines()[1:]
    assert len(lines) == 4
    # axis1-major ordering
    assert [float(l.split(",")[0]) for l in lines] == [0.125, 0.125, 0.2, 0.2]
    # the dark-block exceptional point at V = (gamma-eta)/4 is flagged, not fatal
    first = lines[0].split(",")
    assert first[6] == "EP" and math.isnan(float(first[2]))
    assert lines[3].split(",")[6] == ""


def test_sweep_rejects_unknown_axis(tmp_path):
    spec = {"fixed": json.loads(Path(write_config(tmp_path)).read_text()),
            "axis1": {"name": "gc", "values": [0.1]},
            "axis2": {"name": "M", "values": [10]}}
    cfg = tmp_path / "sweep.json"
    cfg.write_text(json.dumps(spec))
    with pytest.raises(SystemExit) as info:
        run_cli(["sweep", "--config", str(cfg)])
    assert info.value.code == 2


def test_evolve_deterministic_output(tmp_path):
    cfg = write_config(tmp_path, N_total=50, seed=4, n_trajectories=64, t_max=1e9)
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run_cli(["evolve", "--config", cfg, "--out", str(out1)]) == 0
    assert run_cli(["evolve", "--config", cfg, "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    header = out1.read_text().splitlines()[0]
    assert header == "t,mean_NG,stderr_NG"


def test_evolve_single_pair(tmp_path):
    cfg = write_config(tmp_path, N_total=1, seed=4, n_trajectories=32, t_max=1e9)
    out = tmp_path / "one.csv"
    assert run_cli(["evolve", "--config", cfg, "--out", str(out)]) == 0
    rows = [l.split(",") for l in out.read_text().strip().splitlines()[1:]]
    ng = np.array([float(r[1]) for r in rows])
    assert ng[0] <= 1.0 and np.all(np.diff(ng) <= 1e-12)


def test_evolve_stalled_process_exits_4(tmp_path):
    cfg = write_config(tmp_path, g=0.0, gamma_plus=0.0, N_total=5)
    with pytest.raises(SystemExit) as info:
        run_cli(["evolve", "--config", cfg])
    assert info.value.code == 4


def test_fullsim_constant_without_pumps(tmp_path):
    cfg = write_config(tmp_path, N_total=2, kappa_plus=0.0, gamma_plus=0.0,
                       n_trajectories=8, t_max=1e6, seed=1)
    out = tmp_path / "full.csv"
    assert run_cli(["fullsim", "--config", cfg, "--out", str(out), "--threads", "1"]) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "t,mean_NG,stderr_NG,mean_Ne"
    for line in lines[1:]:
        _, ng, err, ne = line.split(",")
        assert float(ng) == 2.0 and float(err) == 0.0 and float(ne) == 0.0


def test_fullsim_dimension_guard_exits_5(tmp_path):
    cfg = write_config(tmp_path, N_total=13)
    with pytest.raises(SystemExit) as info:
        run_cli(["fullsim", "--config", cfg])
    assert info.value.code == 5


def test_validate_flags_broken_propagator(monkeypatch):
    # a sign error in the propagator must trip the superoperator comparison
    good = validation.check_oracle_equivalence(n_draws=2)
    assert good.passed
    import cavity_et.rates as rates_mod
    real = rates_mod.propagator
    monkeypatch.setattr(rates_mod, "propagator",
                        lambda a, b: -real(a, b))
    bad = validation.check_oracle_equivalence(n_draws=2)
    assert not bad.passed


def test_validate_surfaces_exceptional_point(tmp_path, capsys, monkeypatch):
    # keep the run short: only the per-config check matters here
    monkeypatch.setattr(validation, "run_all",
                        lambda params=None: [validation.check_breakdown(params)])
    cfg = write_config(tmp_path, gamma=1.0, eta=0.5, V=0.125, delta=0.0, N_total=4)
    code = run_cli(["validate", "--config", cfg])
    out = capsys.readouterr().out
    assert code == 1
    assert "FAIL" in out and "exceptional" in out.lower()


def test_figures_generates_datasets(tmp_path):
    figs = tmp_path / "figs"
    figs.mkdir()
    (figs / "mini_sweep.json").write_text(json.dumps({
        "fixed": json.loads(Path(write_config(tmp_path)).read_text()),
        "axis1": {"name": "g_c", "scale": "log", "min": 0.05, "max": 0.5, "count": 3},
        "axis2": {"name": "kappa_plus", "values": [0.0, 1e-3]},
    }))
    (figs / "mini_evolve.json").write_text(Path(write_config(
        tmp_path, N_total=20, seed=2, n_trajectories=16, t_max=1e10)).read_text())
    (figs / "manifest.json").write_text(json.dumps({"datasets": [
        {"name": "sweep", "command": "sweep", "config": "mini_sweep.json", "out": "s.csv"},
        {"name": "evolve", "command": "evolve", "config": "mini_evolve.json",
         "overrides": {"n_trajectories": 8}, "out": "e.csv"},
    ]}))
    outdir = tmp_path / "data"
    assert run_cli(["figures", "--figs-dir", str(figs), "--outdir", str(outdir)]) == 0
    assert (outdir / "s.csv").exists()
    rows = (outdir / "s.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + 6
    assert (outdir / "e.csv").exists()


def test_shipped_figure_configs_are_valid():
    figs = Path(__file__).resolve().parent.parent / "figs"
    manifest = json.loads((figs / "manifest.json").read_text())
    names = {e["name"] for e in manifest["datasets"]}
    assert {"fig1e", "fig4a", "fig4b", "fig4cd", "fig5"} <= names
    for entry in manifest["datasets"]:
        assert (figs / entry["config"]).exists()
        doc = json.loads((figs / entry["config"]).read_text())
        if entry["command"] == "sweep":
            cli.sweep_grid(doc)  # resolves without error
