"""Command-line front end: parameter files, sweeps, trajectory runs, validation.

Commands (all read a JSON config via --config):

* ``rate``     one rate breakdown as JSON on stdout (17 significant digits).
* ``sweep``    CSV ``axis1,axis2,r_tot,r_cav,r_ind,r_bare,flag`` over a grid;
               exceptional-point cells carry flag=EP with NaN rates.
* ``evolve``   CSV ``t,mean_NG,stderr_NG`` from the eliminated jump process.
* ``fullsim``  CSV ``t,mean_NG,stderr_NG,mean_Ne`` from full trajectories.
* ``validate`` run the oracle/identity suites; exit 0 iff everything passes.
* ``figures``  generate every dataset listed in a manifest (the checked-in
               figure recipes live in figs/).

Exit codes: 2 config error, 3 exceptional point, 4 stalled jump process,
5 dimension guard, 1 failed validation.  Floats in CSV output use Python
repr (exact round-trip); parallel trajectory runs reduce deterministically,
so a fixed seed reproduces output files byte for byte.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import dynamics, fullsim, rates, validation
from .model import ModelParams, ParameterError, params_from_dict
from .rates import RateBreakdown
from .spectra import ExceptionalPointError

EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_EXCEPTIONAL = 3
EXIT_STALLED = 4
EXIT_DIMENSION = 5

AXIS_EXTRAS = ("g_c", "M")
DEFAULT_T_MIN = 1e2
DEFAULT_T_MAX = 1e9
DEFAULT_GRID_POINTS = 200
DEFAULT_SEED = 12345
DEFAULT_TRAJECTORIES = 1000


class ConfigError(ValueError):
    pass


def _fail(code: int, message: str):
    print(f"cavity-et: {message}", file=sys.stderr)
    raise SystemExit(code)


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as err:
        raise ConfigError(f"config file {path} is not valid JSON: {err}")


def _run_value(doc: dict, key: str, default, caster):
    value = doc.get(key, default)
    if value is None:
        return None
    try:
        return caster(value)
    except (TypeError, ValueError):
        raise ConfigError(f"config key {key!r} has invalid value {value!r}")


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("CAVITY_ET_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"CAVITY_ET_THREADS must be an integer, got {env!r}")
    return max(1, os.cpu_count() or 1)


def _write_text(out_path, text: str):
    if out_path:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, str):
                cells.append(cell)
            else:
                cells.append(repr(float(cell)))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _json_breakdown(b: RateBreakdown) -> str:
    fields = [("r_tot", b.r_tot), ("r_cav", b.r_cav), ("r_ind", b.r_ind),
              ("r_bare", b.r_bare), ("imag_residual", b.imag_residual)]
    body = ", ".join([f'"M": {b.M}'] + [f'"{k}": {v:.17g}' for k, v in fields])
    return "{" + body + "}\n"


# ---------------------------------------------------------------------------
# rate
# ---------------------------------------------------------------------------

def cmd_rate(args) -> int:
    doc = _load_json(args.config)
    params = params_from_dict(doc)
    M = args.M if args.M is not None else params.N_total
    if M < 1:
        raise ConfigError(f"M must be >= 1, got {M}")
    try:
        breakdown = rates.transfer_rate(params, M)
    except ExceptionalPointError as err:
        _fail(EXIT_EXCEPTIONAL, f"exceptional point at M={M}: {err}")
    _write_text(args.out, _json_breakdown(breakdown))
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _axis_values(axis: dict, label: str) -> np.ndarray:
    if not isinstance(axis, dict) or "name" not in axis:
        raise ConfigError(f"{label} must be an object with a 'name'")
    if "values" in axis:
        vals = np.asarray(axis["values"], dtype=float)
        if vals.ndim != 1 or len(vals) == 0:
            raise ConfigError(f"{label}.values must be a non-empty list")
        return vals
    for key in ("scale", "min", "max", "count"):
        if key not in axis:
            raise ConfigError(f"{label} needs 'values' or ('scale','min','max','count'); missing {key!r}")
    count = int(axis["count"])
    if count < 1:
        raise ConfigError(f"{label}.count must be >= 1")
    lo, hi = float(axis["min"]), float(axis["max"])
    if axis["scale"] == "log":
        if lo <= 0 or hi <= 0:
            raise ConfigError(f"{label}: log scale needs positive bounds")
        return np.geomspace(lo, hi, count)
    if axis["scale"] == "linear":
        return np.linspace(lo, hi, count)
    raise ConfigError(f"{label}.scale must be 'linear' or 'log', got {axis['scale']!r}")


def _axis_name(axis: dict, label: str) -> str:
    name = axis["name"]
    from .model import PARAM_FIELDS
    if name not in PARAM_FIELDS + AXIS_EXTRAS:
        raise ConfigError(f"{label}.name {name!r} is not a parameter (or g_c / M)")
    return name


def sweep_grid(spec: dict):
    """Resolve a sweep spec into flat parameter-field arrays plus axis meshes.

    ``g_c`` axes resolve to g = g_c / sqrt(M) cell by cell; an ``M`` axis
    (integer-rounded) overrides the default M = N_total.  The optional
    ``tied`` map sets pump rates as fixed ratios of another (possibly
    swept) field, e.g. kappa_plus tied to 1e-3 * kappa.
    """
    for key in spec:
        if key not in ("fixed", "axis1", "axis2", "tied", "output"):
            raise ConfigError(f"unknown sweep key {key!r}")
    if "fixed" not in spec or "axis1" not in spec or "axis2" not in spec:
        raise ConfigError("sweep config needs 'fixed', 'axis1' and 'axis2'")
    base = params_from_dict(spec["fixed"])
    name1 = _axis_name(spec["axis1"], "axis1")
    name2 = _axis_name(spec["axis2"], "axis2")
    vals1 = _axis_values(spec["axis1"], "axis1")
    vals2 = _axis_values(spec["axis2"], "axis2")
    a1, a2 = np.meshgrid(vals1, vals2, indexing="ij")  # axis1-major rows

    fields = {name: np.full(a1.shape, float(getattr(base, name)))
              for name in ("kappa", "kappa_plus", "gamma", "gamma_plus",
                           "eta", "delta", "V", "g")}
    M = np.full(a1.shape, float(base.N_total))
    g_c = None
    for name, mesh in ((name1, a1), (name2, a2)):
        if name == "M":
            M = np.rint(mesh)
            if np.any(M < 1):
                raise ConfigError("M axis values must be >= 1")
        elif name == "g_c":
            g_c = mesh
        else:
            fields[name] = mesh

    tied = spec.get("tied", {})
    for target, link in tied.items():
        if target not in fields:
            raise ConfigError(f"tied key {target!r} is not a rate field")
        try:
            source, ratio = link
        except (TypeError, ValueError):
            raise ConfigError(f"tied entry for {target!r} must be [source, ratio]")
        if source not in fields:
            raise ConfigError(f"tied source {source!r} is not a rate field")
        fields[target] = float(ratio) * fields[source]

    if g_c is not None:
        fields["g"] = g_c / np.sqrt(M)
    return fields, M, a1, a2


def cmd_sweep(args) -> int:
    spec = _load_json(args.config)
    fields, M, a1, a2 = sweep_grid(spec)
    out = rates.grid_breakdowns(fields["kappa"], fields["kappa_plus"], fields["gamma"],
                                fields["gamma_plus"], fields["eta"], fields["delta"],
                                fields["V"], fields["g"], M)
    rows = []
    for i in range(a1.shape[0]):
        for j in range(a1.shape[1]):
            flag = "EP" if out["flag_ep"][i, j] else ""
            rows.append([a1[i, j], a2[i, j], out["r_tot"][i, j], out["r_cav"][i, j],
                         out["r_ind"][i, j], out["r_bare"][i, j], flag])
    _write_text(args.out, _csv(("axis1", "axis2", "r_tot", "r_cav", "r_ind", "r_bare", "flag"), rows))
    return 0


# ---------------------------------------------------------------------------
# evolve / fullsim
# ---------------------------------------------------------------------------

def _time_grid(doc: dict) -> np.ndarray:
    t_max = _run_value(doc, "t_max", DEFAULT_T_MAX, float)
    if t_max <= DEFAULT_T_MIN:
        raise ConfigError(f"t_max must exceed {DEFAULT_T_MIN}")
    return dynamics.default_time_grid(DEFAULT_T_MIN, t_max, DEFAULT_GRID_POINTS)


def _seed(args, doc: dict) -> int:
    if args.seed is not None:
        return args.seed
    return _run_value(doc, "seed", DEFAULT_SEED, int)


def cmd_evolve(args) -> int:
    doc = _load_json(args.config)
    params = params_from_dict(doc)
    n_traj = _run_value(doc, "n_trajectories", DEFAULT_TRAJECTORIES, int)
    t_grid = _time_grid(doc)
    seed = _seed(args, doc)
    table = rates.rate_table(params, params.N_total)
    try:
        ens = dynamics.run_ensemble(table, n_traj, seed, t_grid, keep_times=False)
    except ValueError as err:
        _fail(EXIT_STALLED, str(err))
    rows = zip(ens.t_grid, ens.mean_NG, ens.stderr_NG)
    _write_text(args.out, _csv(("t", "mean_NG", "stderr_NG"), rows))
    return 0


def cmd_fullsim(args) -> int:
    doc = _load_json(args.config)
    params = params_from_dict(doc)
    if params.N_total > fullsim.MAX_PAIRS:
        _fail(EXIT_DIMENSION,
              f"fullsim is capped at N <= {fullsim.MAX_PAIRS}, got N={params.N_total}")
    n_traj = _run_value(doc, "n_trajectories", DEFAULT_TRAJECTORIES, int)
    t_grid = _time_grid(doc)
    seed = _seed(args, doc)
    ens = fullsim.run_full_ensemble(params, n_traj, seed, t_grid,
                                    workers=_threads(args), engine=args.engine)
    rows = zip(ens.t_grid, ens.mean_NG, ens.stderr_NG, ens.mean_Ne)
    _write_text(args.out, _csv(("t", "mean_NG", "stderr_NG", "mean_Ne"), rows))
    return 0


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    params = None
    if args.config:
        params = params_from_dict(_load_json(args.config))
    failures = 0
    checks = (validation.run_all,)
    try:
        results = validation.run_all(params)
    except ExceptionalPointError as err:
        print(f"FAIL  exceptional-point: {err}")
        return EXIT_VALIDATION
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"{status}  {res.name}: {res.detail}")
        failures += 0 if res.passed else 1
    if failures:
        print(f"{failures} check(s) failed")
        return EXIT_VALIDATION
    print("all checks passed")
    return 0


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------

def cmd_figures(args) -> int:
    manifest_path = Path(args.figs_dir) / "manifest.json"
    manifest = _load_json(str(manifest_path))
    datasets = manifest.get("datasets")
    if not isinstance(datasets, list):
        raise ConfigError(f"{manifest_path} needs a 'datasets' list")
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for entry in datasets:
        name = entry.get("name", "<unnamed>")
        command = entry.get("command")
        config_path = Path(args.figs_dir) / entry["config"]
        doc = _load_json(str(config_path))
        overrides = dict(entry.get("overrides", {}))
        if args.full:
            overrides.update(entry.get("full_overrides", {}))
        out_path = str(outdir / entry["out"])
        print(f"[figures] {name} -> {out_path}", file=sys.stderr)
        sub = argparse.Namespace(out=out_path, seed=args.seed, threads=args.threads,
                                 M=None, engine="sector")
        if command == "sweep":
            if overrides:
                doc = dict(doc)
                doc["fixed"] = {**doc["fixed"], **overrides}
            sub.config = _stash_config(doc)
            cmd_sweep(sub)
        elif command in ("evolve", "fullsim"):
            doc = {**doc, **overrides}
            sub.config = _stash_config(doc)
            (cmd_evolve if command == "evolve" else cmd_fullsim)(sub)
        else:
            raise ConfigError(f"dataset {name!r}: unknown command {command!r}")
    return 0


_STASH_DIR = None


def _stash_config(doc: dict) -> str:
    """Write a derived config to a temp file so subcommands share one loader."""
    global _STASH_DIR
    import tempfile
    if _STASH_DIR is None:
        _STASH_DIR = tempfile.mkdtemp(prefix="cavity-et-")
    import hashlib
    digest = hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]
    path = Path(_STASH_DIR) / f"{digest}.json"
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return str(path)


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cavity-et",
                                     description="Collective electron transfer in a lossy cavity")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON config file")
        p.add_argument("--out", default=None, help="output file (default: stdout)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=None,
                       help="worker processes (default: CAVITY_ET_THREADS or all cores)")

    p = sub.add_parser("rate", help="single-point rate breakdown as JSON")
    common(p)
    p.add_argument("--M", type=int, default=None, help="ground-pair count (default: N_total)")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("sweep", help="rate breakdown over a 2d parameter grid (CSV)")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("evolve", help="effective-dynamics trajectory ensemble (CSV)")
    common(p)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("fullsim", help="full quantum-trajectory ensemble (CSV)")
    common(p)
    p.add_argument("--engine", choices=("sector", "rk4"), default="sector")
    p.set_defaults(func=cmd_fullsim)

    p = sub.add_parser("validate", help="run the oracle and identity suites")
    common(p, config_required=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("figures", help="generate all figure datasets from a manifest")
    common(p, config_required=False)
    p.add_argument("--figs-dir", default="figs", help="directory with manifest.json and configs")
    p.add_argument("--outdir", default="figdata", help="output directory for CSV datasets")
    p.add_argument("--full", action="store_true",
                   help="use full-size trajectory counts (slow)")
    p.set_defaults(func=cmd_figures)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParameterError) as err:
        _fail(EXIT_CONFIG, str(err))
    except ExceptionalPointError as err:
        _fail(EXIT_EXCEPTIONAL, f"exceptional point: {err}")


if __name__ == "__main__":
    sys.exit(main())
