"""Secondary-component gate: every shipped recipe renders from fresh CSVs.

The datasets are regenerated through the primary CLI (reduced trajectory
counts where the manifest allows overrides), so this suite exercises the
real external interface end to end: CLI -> CSV schema -> renderer.
"""

import json
import subprocess
import sys
from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parents[2]
RECIPES = REPO / "figplots" / "recipes"

sys.path.insert(0, str(REPO / "figplots"))
import render  # noqa: E402


@pytest.fixture(scope="module")
def fresh_datasets(tmp_path_factory):
    """Generate all figure CSVs via the CLI with smoke-scale ensembles."""
    workdir = tmp_path_factory.mktemp("figdata")
    figs = workdir / "figs"
    figs.mkdir()
    manifest = json.loads((REPO / "figs" / "manifest.json").read_text())
    for entry in manifest["datasets"]:
        src = json.loads((REPO / "figs" / entry["config"]).read_text())
        (figs / entry["config"]).write_text(json.dumps(src))
        if entry["command"] in ("evolve", "fullsim"):
            entry.setdefault("overrides", {})["n_trajectories"] = 16
    (figs / "manifest.json").write_text(json.dumps(manifest))
    outdir = workdir / "data"
    proc = subprocess.run(
        [sys.executable, "-m", "cavity_et.cli", "figures",
         "--figs-dir", str(figs), "--outdir", str(outdir)],
        capture_output=True, text=True, timeout=1200)
    assert proc.returncode == 0, proc.stderr
    return outdir


@pytest.mark.parametrize("name", ["fig1e", "fig2", "fig3", "fig4a", "fig4b",
                                  "fig4cd", "fig5"])
def test_recipe_renders(fresh_datasets, tmp_path, name):
    out = render.render(RECIPES / f"{name}.json", data_dir=fresh_datasets,
                        out_dir=tmp_path)
    assert out.exists() and out.stat().st_size > 0


def test_enhancement_contour_carries_equal_rates_level():
    recipe = json.loads((RECIPES / "fig4a.json").read_text())
    assert 1.0 in recipe["levels"]
    recipe = json.loads((RECIPES / "fig4cd.json").read_text())
    assert 1.0 in recipe["contour"]["levels"]


def test_missing_equal_rates_level_rejected(tmp_path):
    csv_path = tmp_path / "grid.csv"
    csv_path.write_text(
        "axis1,axis2,r_tot,r_cav,r_ind,r_bare,flag\n"
        "1.0,1.0,1.0,2.0,0.5,1.0,\n"
        "1.0,2.0,1.0,2.0,0.5,1.0,\n"
        "2.0,1.0,1.0,2.0,0.5,1.0,\n"
        "2.0,2.0,1.0,2.0,0.5,1.0,\n")
    recipe = tmp_path / "recipe.json"
    recipe.write_text(json.dumps({
        "panel": "contour", "input": "grid.csv", "out": str(tmp_path / "x.png"),
        "x": "axis1", "y": "axis2", "z": {"ratio": ["r_cav", "r_bare"]},
        "levels": [2.0],
    }))
    with pytest.raises(render.RecipeError, match="equal-rates"):
        render.render(recipe, data_dir=tmp_path, out_dir=tmp_path)
    assert not (tmp_path / "x.png").exists()


def test_empty_csv_rejected_without_output(tmp_path):
    csv_path = tmp_path / "empty.csv"
    csv_path.write_text("t,mean_NG,stderr_NG\n")
    recipe = tmp_path / "recipe.json"
    recipe.write_text(json.dumps({
        "panel": "lines_files", "out": str(tmp_path / "y.png"),
        "inputs": [{"path": "empty.csv"}], "x": "t", "y": "mean_NG",
    }))
    with pytest.raises(render.RecipeError, match="no data rows"):
        render.render(recipe, data_dir=tmp_path, out_dir=tmp_path)
    assert not (tmp_path / "y.png").exists()


def test_missing_column_named_in_error(tmp_path):
    csv_path = tmp_path / "cols.csv"
    csv_path.write_text("t,mean_NG\n1.0,2.0\n")
    recipe = tmp_path / "recipe.json"
    recipe.write_text(json.dumps({
        "panel": "lines_files", "out": str(tmp_path / "z.png"),
        "inputs": [{"path": "cols.csv"}], "x": "t", "y": "stderr_NG",
    }))
    with pytest.raises(render.RecipeError, match="stderr_NG"):
        render.render(recipe, data_dir=tmp_path, out_dir=tmp_path)
