"""Command-line front end: ``optomech-router <experiment> [options]``.

Experiments
-----------
blockade-scan   steady-state g2 versus Delta_- (effective and/or original model)
router-scan     four port numbers versus delta' for a list of g
router-opt      n_r_plus over (g, gamma) at delta' = 0 and the best gamma per g
scatter-verify  waveguide oracle versus the analytic port numbers

Each run writes a results CSV (``.12g`` numbers, a ``# config:`` line with the
resolved parameters, then a header), ``resolved_config.json`` and
``run_summary.json``.  The exit status is 0 only when every built-in check
passes.
"""
from __future__ import annotations

import argparse
import csv
import difflib
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import observables, router, waveguide_oracle
from .model import SystemParams

log = logging.getLogger("optomech_router")

EXPERIMENTS = ("blockade-scan", "router-scan", "router-opt", "scatter-verify")

# defaults double as the schema: every key's type is taken from its default
DEFAULTS = {
    "blockade-scan": {
        "J": 0.5, "g": 0.03, "omega_m": 1.0, "kappa": 1e-3, "gamma_m": 5e-6, "n_th": 0.0,
        "eps1": 1.1e-4, "eps2": -1.1e-4,
        "dm_min": -0.1, "dm_max": 0.1, "dm_points": 201,
        "hamiltonian": "both",
        "cavity_dim": 4, "photon_cap": 3, "mech_dim_effective": 5, "mech_dim_original": 4,
        "mech_plus_dim": 2,
        "convergence": "auto", "conv_rtol": 0.05, "literal_heating": False,
    },
    "router-scan": {
        "g_list": [0.0, 0.02, 0.04, 0.05], "gamma": 0.01, "epsilon": 1e-4,
        "dp_min": -0.1, "dp_max": 0.1, "dp_points": 801, "norm_tol": 1e-4,
    },
    "router-opt": {
        "g_list": [0.0, 0.02, 0.04, 0.06], "gamma_min": 0.005, "gamma_max": 0.08,
        "gamma_points": 40, "delta_prime": 0.0, "epsilon": 1e-4, "norm_tol": 1e-4,
    },
    "scatter-verify": {
        "n_tuples": 20, "seed": 0, "epsilon": 2e-3, "refine_every": 4, "dt_factor": 0.1,
        "tolerance": 0.02, "refine_tolerance": 0.005,
    },
}

CHOICES = {
    "hamiltonian": ("effective", "original", "both"),
    "convergence": ("auto", "all", "extrema", "none"),
}
POSITIVE = {"kappa", "gamma", "epsilon", "omega_m", "gamma_min", "gamma_max", "tolerance",
            "refine_tolerance", "norm_tol", "conv_rtol", "dt_factor"}
NON_NEGATIVE = {"gamma_m", "n_th", "g", "seed"}
MIN_INT = {"dm_points": 1, "dp_points": 1, "gamma_points": 1, "n_tuples": 1,
           "cavity_dim": 2, "mech_dim_effective": 2, "mech_dim_original": 2, "mech_plus_dim": 2,
           "photon_cap": 1, "refine_every": 0}


class ConfigError(ValueError):
    pass


def _coerce(key, value, default):
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false", "1", "0"):
            return value.lower() in ("true", "1")
        raise ConfigError(f"{key} must be a boolean")
    if isinstance(default, int):
        if isinstance(value, bool) or not float(value).is_integer():
            raise ConfigError(f"{key} must be an integer")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool):
            raise ConfigError(f"{key} must be a number")
        try:
            v = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be a number") from None
        if not math.isfinite(v):
            raise ConfigError(f"{key} must be finite")
        return v
    if isinstance(default, list):
        if not isinstance(value, (list, tuple)):
            value = [value]
        return [_coerce(key, v, 0.0) for v in value]
    return str(value)


def _validate(cfg):
    for key, value in cfg.items():
        vals = value if isinstance(value, list) else [value]
        if key in POSITIVE and not all(v > 0 for v in vals):
            raise ConfigError(f"{key} must be > 0")
        if key in NON_NEGATIVE or key == "g_list":
            if not all(v >= 0 for v in vals):
                raise ConfigError(f"{key} must be >= 0")
        if key in MIN_INT and value < MIN_INT[key]:
            raise ConfigError(f"{key} must be >= {MIN_INT[key]}")
        if key in CHOICES and value not in CHOICES[key]:
            raise ConfigError(f"{key} must be one of {CHOICES[key]}, got {value!r}")
    for lo, hi in (("dm_min", "dm_max"), ("dp_min", "dp_max"), ("gamma_min", "gamma_max")):
        if lo in cfg and cfg[lo] > cfg[hi]:
            raise ConfigError(f"{lo} must not exceed {hi}")
    if "g_list" in cfg and not cfg["g_list"]:
        raise ConfigError("g_list must be nonempty")


def _parse_set(items):
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            out[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            out[key.strip()] = raw
    return out


def parse_config(experiment: str, path: str | None = None, overrides: dict | None = None) -> dict:
    """Defaults, then the JSON file, then ``--set`` overrides; fully validated."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    defaults = DEFAULTS[experiment]
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
    raw = {**raw, **(overrides or {})}
    cfg = dict(defaults)
    for key, value in raw.items():
        if key not in defaults:
            near = difflib.get_close_matches(key, defaults, n=1)
            hint = f"; did you mean {near[0]!r}?" if near else ""
            raise ConfigError(f"unknown key {key!r} for {experiment}{hint}")
        cfg[key] = _coerce(key, value, defaults[key])
    _validate(cfg)
    return cfg


# -- output helpers -----------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else format(float(v), ".12g")
    return str(v)


def write_csv(path: Path, columns, rows, cfg) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# config: " + json.dumps(cfg, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


# -- experiments --------------------------------------------------------------

def run_blockade(cfg, out: Path, jobs: int):
    params = SystemParams(J=cfg["J"], g=cfg["g"], omega_m=cfg["omega_m"], kappa=cfg["kappa"],
                          gamma_m=cfg["gamma_m"], n_th=cfg["n_th"], eps1=cfg["eps1"],
                          eps2=cfg["eps2"])
    grid = np.linspace(cfg["dm_min"], cfg["dm_max"], cfg["dm_points"])
    choices = ("effective", "original") if cfg["hamiltonian"] == "both" else (cfg["hamiltonian"],)
    conv = None if cfg["convergence"] == "auto" else cfg["convergence"]
    rows, checks, info = [], {}, {}
    for choice in choices:
        trunc = observables.Truncation(cfg["cavity_dim"], cfg["photon_cap"],
                                       cfg[f"mech_dim_{choice}"], cfg["mech_plus_dim"])
        scan = observables.blockade_scan(params, grid, choice, trunc=trunc, convergence=conv,
                                         rtol=cfg["conv_rtol"],
                                         literal_heating=cfg["literal_heating"], jobs=jobs)
        failed = [pt.delta_minus for pt in scan.points if not pt.ok]
        unconverged = [pt.delta_minus for pt in scan.points if pt.converged == "false"]
        checks[f"{choice}_all_points_solved"] = not failed
        checks[f"{choice}_converged"] = not unconverged
        entry = {"failed_points": failed, "unconverged_points": unconverged,
                 "argmin": {}, "argmin_by_sign": {}}
        split = (grid < 0).any() and (grid > 0).any()
        for k in ("g2_mm", "g2_pp", "g2_mp"):
            if not np.isfinite(scan.column(k)).any():
                continue  # undefined everywhere, e.g. an undriven mode
            entry["argmin"][k] = scan.argmin(k)
            if split:
                entry["argmin_by_sign"][k] = scan.argmin_by_sign(k)
        info[choice] = entry
        for pt in scan.points:
            row = dict(pt.__dict__)
            row["hamiltonian"] = choice
            rows.append(row)
    cols = ["delta_minus", "g2_mm", "g2_pp", "g2_mp", "n_minus", "n_plus", "hamiltonian",
            "converged", "n_phonon", "max_rel_change", "residual", "status"]
    write_csv(out / "blockade_scan.csv", cols, rows, cfg)
    info["reference_g_over_sqrt2"] = cfg["g"] / math.sqrt(2)
    return checks, info, ["blockade_scan.csv"]


def run_router_scan(cfg, out: Path, jobs: int):
    grid = np.linspace(cfg["dp_min"], cfg["dp_max"], cfg["dp_points"])
    checks, info, files = {}, {}, []
    cols = ["delta_prime", *router.PORTS, "sum"]
    for g in cfg["g_list"]:
        base = router.RouterParams(g=g, gamma=cfg["gamma"], epsilon=cfg["epsilon"])
        scan = router.router_scan(base, grid, jobs=jobs)
        rows = [dict(delta_prime=d, **dict(zip(router.PORTS, n)), sum=n.sum())
                for d, n in zip(grid, scan.numbers)]
        name = f"router_scan_g{g:.12g}.csv"
        write_csv(out / name, cols, rows, {**cfg, "g": g})
        files.append(name)
        ok = np.isfinite(scan.numbers).all()
        dev = float(np.nanmax(np.abs(scan.totals - 1))) if ok else float("nan")
        checks[f"g={g:.12g}_normalization"] = bool(ok and dev <= cfg["norm_tol"])
        checks[f"g={g:.12g}_plus_symmetry"] = bool(np.array_equal(scan.column("n_r_plus"),
                                                                  scan.column("n_l_plus")))
        info[f"g={g:.12g}"] = {
            "max_normalization_error": dev,
            "failed_points": [float(d) for d, s in zip(grid, scan.status) if s != "ok"],
            "extrema": {p: {k: v.tolist() for k, v in scan.extrema(p).items()}
                        for p in router.PORTS},
            "g_over_sqrt2": g / math.sqrt(2),
        }
    return checks, info, files


def run_router_opt(cfg, out: Path, jobs: int):
    gammas = np.geomspace(cfg["gamma_min"], cfg["gamma_max"], cfg["gamma_points"])
    g_list = np.array(cfg["g_list"])
    surf = router.optimum_surface(g_list, gammas, cfg["delta_prime"], cfg["epsilon"], jobs=jobs)
    rows = [dict(g=g, gamma=gm, n_r_plus=surf.n_r_plus[i, j])
            for i, g in enumerate(g_list) for j, gm in enumerate(gammas)]
    write_csv(out / "router_opt.csv", ["g", "gamma", "n_r_plus"], rows, cfg)
    finite = bool(np.isfinite(surf.n_r_plus).all())
    checks = {"all_points_solved": finite,
              "plus_port_bounds": bool(finite and (surf.n_r_plus >= -1e-12).all()
                                       and (surf.n_r_plus <= 0.5 + 1e-9).all())}
    info = {"argmax_gamma": {f"{g:.12g}": (None if math.isnan(b) else b)
                             for g, b in zip(g_list, surf.argmax_gamma)},
            "g_over_sqrt2": {f"{g:.12g}": g / math.sqrt(2) for g in g_list}}
    return checks, info, ["router_opt.csv"]


def run_scatter_verify(cfg, out: Path, jobs: int):
    tuples = waveguide_oracle.random_tuples(cfg["n_tuples"], cfg["seed"], cfg["epsilon"])
    cmp = waveguide_oracle.compare_with_router(tuples, refine_every=cfg["refine_every"],
                                               dt_factor=cfg["dt_factor"], jobs=jobs)
    rows = cmp.rows()
    write_csv(out / "scatter_verify.csv", list(rows[0]), rows, cfg)
    ref = cmp.refinement_changes()
    max_ref = max(ref.values()) if ref else 0.0
    checks = {"oracle_matches_band_limited": cmp.max_abs_diff <= cfg["tolerance"],
              "oracle_matches_integrated": cmp.max_abs_diff_integrated <= cfg["tolerance"],
              "refinement_stable": max_ref <= cfg["refine_tolerance"]}
    info = {"max_abs_oracle_minus_band_limited": cmp.max_abs_diff,
            "max_abs_oracle_minus_integrated": cmp.max_abs_diff_integrated,
            "max_refinement_change": max_ref,
            "refined_tuples": sorted(ref)}
    return checks, info, ["scatter_verify.csv"]


RUNNERS = {
    "blockade-scan": run_blockade,
    "router-scan": run_router_scan,
    "router-opt": run_router_opt,
    "scatter-verify": run_scatter_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="optomech-router", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with parameter overrides")
        p.add_argument("--out", default="results", help="output directory (default: results)")
        p.add_argument("--jobs", type=int, default=None,
                       help="worker processes (default: $OPTOMECH_ROUTER_JOBS or 1)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", dest="overrides",
                       help="override one parameter; VALUE is parsed as JSON when possible")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.experiment, args.config, _parse_set(args.overrides))
        jobs = observables.resolve_jobs(args.jobs)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "resolved_config.json", {"experiment": args.experiment, **cfg})
    t0 = time.perf_counter()
    try:
        checks, info, files = RUNNERS[args.experiment](cfg, out, jobs)
    except Exception as exc:
        log.exception("run failed")
        _write_json(out / "run_summary.json", {
            "experiment": args.experiment, "passed": False, "error": f"{type(exc).__name__}: {exc}",
            "wall_clock_s": time.perf_counter() - t0})
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    passed = all(checks.values())
    _write_json(out / "run_summary.json", {
        "experiment": args.experiment, "passed": passed, "checks": checks, "details": info,
        "files": files, "wall_clock_s": time.perf_counter() - t0, "jobs": jobs,
    })
    for name, ok in checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
