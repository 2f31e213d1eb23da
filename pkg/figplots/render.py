#!/usr/bin/env python3
"""Render figure panels from the CSV datasets emitted by the cavity-et CLI.

This layer never recomputes physics: it reads the delimited files produced
by ``cavity-et sweep/evolve/fullsim`` (so the simulation remains the single
source of numbers) and draws matplotlib panels according to small JSON
recipes.  Exceptional-point cells arrive as NaN rates and render as gaps.

Usage:
    python figplots/render.py --recipe figplots/recipes/fig2.json \
        [--data-dir figdata] [--out-dir figures]
    python figplots/render.py --all [--recipes-dir figplots/recipes] ...

Recipes reference CSV columns by name; a missing column or an empty CSV is
an error and no image is written.  Ratio contours must include the level
where both rates are equal (ratio 1), which is enforced before drawing.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


class RecipeError(ValueError):
    pass


def load_csv(path: Path) -> dict:
    """Read one CLI dataset into {column: float array} (flag stays text)."""
    if not path.exists():
        raise RecipeError(f"input CSV not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise RecipeError(f"{path} has no header row")
        rows = list(reader)
    if not rows:
        raise RecipeError(f"{path} contains no data rows")
    out = {}
    for name in reader.fieldnames:
        if name == "flag":
            out[name] = np.array([r[name] for r in rows])
        else:
            out[name] = np.array([float(r[name]) for r in rows])
    return out


def column(data: dict, name, path) -> np.ndarray:
    """Resolve a column reference; {"ratio": [a, b]} divides two columns."""
    if isinstance(name, dict) and "ratio" in name:
        num, den = name["ratio"]
        with np.errstate(all="ignore"):
            return column(data, num, path) / column(data, den, path)
    if name not in data:
        raise RecipeError(f"column {name!r} not found in {path} "
                          f"(have {sorted(data)})")
    return data[name]


def _style_axes(ax, spec):
    if spec.get("xscale"):
        ax.set_xscale(spec["xscale"])
    if spec.get("yscale"):
        ax.set_yscale(spec["yscale"])
    if spec.get("xlabel"):
        ax.set_xlabel(spec["xlabel"])
    if spec.get("ylabel"):
        ax.set_ylabel(spec["ylabel"])
    if spec.get("title"):
        ax.set_title(spec["title"])


def panel_lines(ax, recipe, data_dir):
    """One CSV, one curve per value of a grouping column."""
    data = load_csv(data_dir / recipe["input"])
    x = column(data, recipe["x"], recipe["input"])
    y = column(data, recipe["y"], recipe["input"])
    groups = column(data, recipe["group"], recipe["input"])
    for value in dict.fromkeys(groups.tolist()):  # stable order
        sel = groups == value
        label = f"{recipe.get('group_label', recipe['group'])} = {value:g}"
        ax.plot(x[sel], np.ma.masked_invalid(y[sel]), label=label)
    _style_axes(ax, recipe)
    ax.legend(fontsize=8)


def panel_lines_files(ax, recipe, data_dir):
    """One curve per input CSV (e.g. a family of depletion runs)."""
    for entry in recipe["inputs"]:
        data = load_csv(data_dir / entry["path"])
        x = column(data, recipe["x"], entry["path"])
        y = column(data, recipe["y"], entry["path"])
        ax.plot(x, np.ma.masked_invalid(y), entry.get("style", "-"),
                label=entry.get("label"))
    _style_axes(ax, recipe)
    ax.legend(fontsize=8)


def panel_overlay(ax, recipe, data_dir):
    """Shaded uncertainty band plus reference curves on one axis."""
    band = recipe["band"]
    data = load_csv(data_dir / band["path"])
    x = column(data, band["x"], band["path"])
    y = column(data, band["y"], band["path"])
    err = column(data, band["err"], band["path"])
    sigmas = float(band.get("sigmas", 2.0))
    ax.fill_between(x, np.maximum(y - sigmas * err, 1e-12), y + sigmas * err,
                    alpha=0.35, label=band.get("label"))
    for line in recipe.get("lines", ()):
        data = load_csv(data_dir / line["path"])
        ax.plot(column(data, line["x"], line["path"]),
                np.ma.masked_invalid(column(data, line["y"], line["path"])),
                line.get("style", "-"), label=line.get("label"))
    _style_axes(ax, recipe)
    ax.legend(fontsize=8)


def _grid_from_rows(data, spec, path):
    """Rebuild the axis1-major sweep grid from flat CSV rows."""
    a1 = column(data, spec["x"], path)
    a2 = column(data, spec["y"], path)
    x = np.array(list(dict.fromkeys(a1.tolist())))
    y = np.array(list(dict.fromkeys(a2.tolist())))
    if len(x) * len(y) != len(a1):
        raise RecipeError(f"{path}: rows do not form a complete axis1-major grid")
    z = column(data, spec["z"], path).reshape(len(x), len(y))
    return x, y, z


def _draw_contour(ax, spec, data_dir):
    path = spec.get("input")
    data = load_csv(data_dir / path)
    x, y, z = _grid_from_rows(data, spec, path)
    levels = spec.get("levels")
    if isinstance(spec["z"], dict) and "ratio" in spec["z"]:
        if not levels or not any(math.isclose(l, 1.0) for l in levels):
            raise RecipeError("ratio contours must include the equal-rates level 1.0")
    zm = np.ma.masked_invalid(z).T
    if spec.get("zscale") == "log":
        from matplotlib.colors import LogNorm
        positive = zm[zm > 0]
        norm = LogNorm(vmin=positive.min(), vmax=positive.max())
        mesh = ax.pcolormesh(x, y, np.ma.masked_less_equal(zm, 0.0),
                             norm=norm, shading="nearest")
    else:
        mesh = ax.pcolormesh(x, y, zm, shading="nearest")
    plt.colorbar(mesh, ax=ax, label=spec.get("zlabel"))
    if levels:
        cs = ax.contour(x, y, zm, levels=sorted(levels), colors="black",
                        linewidths=0.8)
        equal = [l for l in (levels or ()) if math.isclose(l, 1.0)]
        if equal:
            ax.contour(x, y, zm, levels=equal, colors="white", linewidths=1.6)
        ax.clabel(cs, fontsize=7, fmt="%g")
    _style_axes(ax, spec)


def panel_contour(ax, recipe, data_dir):
    spec = dict(recipe)
    spec.setdefault("input", recipe["input"])
    _draw_contour(ax, spec, data_dir)


def panel_contour_cut(fig, recipe, data_dir):
    """Contour panel plus a one-dimensional cut along axis1."""
    ax_contour, ax_cut = fig.subplots(1, 2)
    contour = dict(recipe["contour"])
    contour.setdefault("input", recipe["input"])
    _draw_contour(ax_contour, contour, data_dir)

    cut = recipe["cut"]
    path = recipe["input"]
    data = load_csv(data_dir / path)
    at = cut["at"]
    sel = np.isclose(column(data, at["column"], path), float(at["value"]),
                     rtol=1e-9, atol=0.0)
    if not sel.any():
        raise RecipeError(f"cut value {at['value']} not present in column {at['column']}")
    x = column(data, cut["x"], path)[sel]
    for line in cut.get("left", ()):
        y = column(data, line["y"], path)[sel]
        ax_cut.plot(x, np.ma.masked_invalid(y), line.get("style", "-"),
                    label=line.get("label"))
    ax_cut.legend(loc="upper left", fontsize=8)
    _style_axes(ax_cut, cut)
    if cut.get("right"):
        twin = ax_cut.twinx()
        for line in cut["right"]:
            y = column(data, line["y"], path)[sel]
            twin.plot(x, np.ma.masked_invalid(y), line.get("style", "-"),
                      label=line.get("label"))
        if cut.get("right_yscale"):
            twin.set_yscale(cut["right_yscale"])
        if cut.get("right_ylabel"):
            twin.set_ylabel(cut["right_ylabel"])
        twin.legend(loc="lower right", fontsize=8)
    if cut.get("collective_scale"):
        # secondary axis showing g_c = g sqrt(N) above the pair-number axis
        g = float(cut["collective_scale"]["g"])
        secax = ax_cut.secondary_xaxis(
            "top", functions=(lambda n: g * np.sqrt(n), lambda gc: (gc / g) ** 2))
        secax.set_xlabel(cut["collective_scale"].get("label", "g_c"))


def render(recipe_path, data_dir=None, out_dir=None) -> Path:
    """Render one recipe; returns the written image path."""
    recipe_path = Path(recipe_path)
    recipe = json.loads(recipe_path.read_text())
    data_dir = Path(data_dir) if data_dir else Path(recipe.get("data_dir", "figdata"))
    out_path = Path(recipe["out"])
    if out_dir:
        out_path = Path(out_dir) / out_path.name
    panel = recipe.get("panel")
    if panel == "contour_cut":
        fig = plt.figure(figsize=recipe.get("figsize", (11, 4.2)))
        panel_contour_cut(fig, recipe, data_dir)
    else:
        fig, ax = plt.subplots(figsize=recipe.get("figsize", (5.6, 4.2)))
        if panel == "lines":
            panel_lines(ax, recipe, data_dir)
        elif panel == "lines_files":
            panel_lines_files(ax, recipe, data_dir)
        elif panel == "overlay":
            panel_overlay(ax, recipe, data_dir)
        elif panel == "contour":
            panel_contour(ax, recipe, data_dir)
        else:
            plt.close(fig)
            raise RecipeError(f"unknown panel type {panel!r}")
    fig.tight_layout()
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=recipe.get("dpi", 160))
    plt.close(fig)
    return out_path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--recipe", help="one recipe JSON to render")
    parser.add_argument("--all", action="store_true", help="render every recipe in --recipes-dir")
    parser.add_argument("--recipes-dir", default="figplots/recipes")
    parser.add_argument("--data-dir", default=None, help="directory holding the CSV datasets")
    parser.add_argument("--out-dir", default=None, help="directory for the rendered images")
    args = parser.parse_args(argv)
    try:
        if args.all:
            recipes = sorted(Path(args.recipes_dir).glob("*.json"))
            if not recipes:
                raise RecipeError(f"no recipes found in {args.recipes_dir}")
            for recipe in recipes:
                out = render(recipe, args.data_dir, args.out_dir)
                print(f"rendered {recipe.name} -> {out}")
        elif args.recipe:
            out = render(args.recipe, args.data_dir, args.out_dir)
            print(f"rendered {args.recipe} -> {out}")
        else:
            parser.error("need --recipe or --all")
    except RecipeError as err:
        print(f"render: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
