"""Command-line front end: config-driven experiments with CSV/JSON output.

Usage::

    clocklat <command> --config <path> [--out <path>] [--format csv|json]
                       [--threads N] [--seed S]

Commands: ``spectrum``, ``dist``, ``fidelity``, ``tradeoff``,
``cloner-check``.  One experiment per config file; unknown keys are rejected.
Exit codes: 0 success, 2 validation error, 3 resource cap, 4 non-convergence.
Output is byte-identical for identical config and seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import warnings

from . import __version__
from .errors import CapExceededError, ConfigError, ConvergenceError
from .lattice import ClockSpec, lattice_size, moments
from .distributions import exact_distribution, gaussian_approx
from .fidelity import Filter, sandwich_experiment
from .cloner import StateFamily, definetti_gap, optimal_cloner
from .tradeoff import (
    high_succ_expansion,
    low_succ_fidelity,
    optimal_fidelity_exact,
    tradeoff_at_succ,
    tradeoff_parametric,
)

SCHEMA = "clocklat-1"
DEFAULT_SEED = 20240817

_COMMANDS = ("spectrum", "dist", "fidelity", "tradeoff", "cloner-check")


def _require_keys(obj: dict, allowed: set, required: set, where: str):
    if not isinstance(obj, dict):
        raise ConfigError("expected an object", field=where)
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", field=where)
    missing = required - set(obj)
    if missing:
        raise ConfigError(f"missing keys {sorted(missing)}", field=where)


def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(str(exc), field="config") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
                          field="config") from exc
    _require_keys(cfg, {"clock", "run", "parameters", "output", "seed"}, {"run"}, "config")
    if cfg["run"] not in _COMMANDS:
        raise ConfigError(f"run must be one of {_COMMANDS}", field="run")
    if "output" in cfg:
        _require_keys(cfg["output"], {"path", "format"}, set(), "output")
        fmt = cfg["output"].get("format", "csv")
        if fmt not in ("csv", "json"):
            raise ConfigError("format must be 'csv' or 'json'", field="output.format")
    return cfg


def _clock_from_config(cfg: dict) -> ClockSpec:
    if "clock" not in cfg:
        raise ConfigError("command requires a clock block", field="clock")
    block = cfg["clock"]
    _require_keys(block, {"units", "K", "probs"}, {"units", "K", "probs"}, "clock")
    try:
        return ClockSpec(units=block["units"], K=block["K"], probs=block["probs"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), field="clock") from exc


def _params(cfg: dict, allowed: set, required: set) -> dict:
    params = cfg.get("parameters", {})
    _require_keys(params, allowed, required, "parameters")
    return params


def _family_from_params(params: dict) -> StateFamily:
    states = []
    for i, state in enumerate(params["states"]):
        try:
            states.append([complex(re, im) for re, im in state])
        except (TypeError, ValueError) as exc:
            raise ConfigError("amplitudes must be [re, im] pairs",
                              field=f"parameters.states[{i}]") from exc
    try:
        return StateFamily(states, params.get("priors"))
    except ValueError as exc:
        raise ConfigError(str(exc), field="parameters.states") from exc


def _fmt(value) -> object:
    if isinstance(value, (bool, int, str)) or value is None:
        return value
    if isinstance(value, float):
        return value
    return str(value)


# ---------------------------------------------------------------------------
# commands; each returns (column names, rows of dicts)

def cmd_spectrum(cfg: dict, seed: int):
    params = _params(cfg, {"n"}, {"n"})
    spec = _clock_from_config(cfg)
    n = int(params["n"])
    sf = spec.smith()
    mom = moments(spec, n)
    rows = [
        {"name": "levels", "value": spec.d},
        {"name": "units", "value": json.dumps(list(spec.units))},
        {"name": "rank", "value": spec.r},
        {"name": "T", "value": json.dumps([list(r) for r in sf.T])},
        {"name": "A", "value": json.dumps(list(sf.A))},
        {"name": "S", "value": json.dumps([list(r) for r in sf.S])},
        {"name": "unit_cell_volume", "value": sf.unit_cell_volume},
        {"name": "lattice_size", "value": lattice_size(spec, n)},
        {"name": "mean", "value": json.dumps([float(v) for v in mom.mean])},
        {"name": "cov", "value": json.dumps([[float(v) for v in row] for row in mom.cov])},
        {"name": "tilde_cov", "value": json.dumps([[float(v) for v in row] for row in mom.tilde_cov])},
    ]
    return ["name", "value"], rows


def cmd_dist(cfg: dict, seed: int):
    params = _params(cfg, {"n", "gaussian"}, {"n"})
    spec = _clock_from_config(cfg)
    n = int(params["n"])
    with_gaussian = bool(params.get("gaussian", False))
    dist = exact_distribution(spec, n)
    ga = gaussian_approx(spec, n) if with_gaussian and spec.r else None
    columns = [f"s{i}" for i in range(spec.r)] + ["mass"] + (["gaussian_mass"] if ga else [])
    rows = []
    gm = ga.mass(dist.points) if ga else None
    for i, (pt, mass) in enumerate(zip(dist.points, dist.masses)):
        row = {f"s{j}": int(v) for j, v in enumerate(pt)}
        row["mass"] = float(mass)
        if ga:
            row["gaussian_mass"] = float(gm[i])
        rows.append(row)
    return columns, rows


def cmd_fidelity(cfg: dict, seed: int):
    params = _params(cfg, {"n", "mList", "eta"}, {"n", "mList"})
    spec = _clock_from_config(cfg)
    n = int(params["n"])
    m_list = [int(m) for m in params["mList"]]
    eta = float(params.get("eta", 0.5))
    dist_n = exact_distribution(spec, n)
    filt = Filter.trivial(dist_n)
    rows = []
    for row in sandwich_experiment(spec, n, m_list, filt, width_exponent=eta):
        rows.append({
            "m": row.m,
            "p_succ": row.pm.succ,
            "f_pm": row.pm.value,
            "f_cloner": row.cloner.fidelity if row.cloner else None,
            "f_bound": row.bound.value,
            "f_asymptotic": row.asymptotic.value,
            "gap_pm_asymptotic": row.gap_pm_asymptotic,
            "gap_pm_bound": row.gap_pm_bound,
        })
    columns = ["m", "p_succ", "f_pm", "f_cloner", "f_bound", "f_asymptotic",
               "gap_pm_asymptotic", "gap_pm_bound"]
    return columns, rows


def cmd_tradeoff(cfg: dict, seed: int):
    params = _params(cfg, {"r", "n", "m", "succGrid", "exact"}, {"n", "m", "succGrid"})
    spec = _clock_from_config(cfg) if "clock" in cfg else None
    if spec is None and "r" not in params:
        raise ConfigError("need either a clock block or parameters.r", field="parameters.r")
    r = int(params.get("r", spec.r if spec else 1))
    n, m = int(params["n"]), int(params["m"])
    grid = [float(p) for p in params["succGrid"]]
    want_exact = bool(params.get("exact", False)) and spec is not None
    if any(not 0.0 < p <= 1.0 for p in grid):
        raise ConfigError("success probabilities must lie in (0, 1]", field="parameters.succGrid")
    dist_min = exact_distribution(spec, n).min_mass() if spec is not None else None
    eq10 = low_succ_fidelity(spec, n, m) if spec is not None else None
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for target in grid:
            point = tradeoff_at_succ(r, n, m, target)
            eta = 1.0 - target
            flat = dist_min is not None and target < dist_min
            row = {
                "p_succ": target,
                "alpha": point.alpha,
                "f_parametric": point.fidelity,
                "f_exact": optimal_fidelity_exact(spec, n, m, target).fidelity if want_exact else None,
                "f_eq10": eq10 if flat else None,
                "f_eq11": high_succ_expansion(r, n, m, eta).fidelity if eta <= 0.2 else None,
            }
            rows.append(row)
    columns = ["p_succ", "alpha", "f_parametric", "f_exact", "f_eq10", "f_eq11"]
    return columns, rows


def cmd_cloner_check(cfg: dict, seed: int):
    params = _params(
        cfg,
        {"states", "priors", "n", "mList", "kList", "randomProbes"},
        {"states", "n", "mList", "kList"},
    )
    family = _family_from_params(params)
    n = int(params["n"])
    m_list = [int(m) for m in params["mList"]]
    k_list = [int(k) for k in params["kList"]]
    probes = list(family.states_array)
    n_random = int(params.get("randomProbes", 0))
    if n_random:
        from .cloner import random_pure_states

        probes += list(random_pure_states(family.d, n_random, seed))
    rows = []
    for m in m_list:
        for k in k_list:
            if k >= m:
                raise ConfigError(f"k={k} must be below m={m}", field="parameters.kList")
            choi = optimal_cloner(family, n, m, k)
            if k == 0:
                for i, psi in enumerate(probes):
                    rows.append({
                        "m": m, "k": k, "probe": i, "success": choi.success_on(psi),
                        "gap": 0.0, "gap_bound": 0.0, "gap_ok": True,
                        "p_err": 0.5, "p_err_bound": 0.5, "p_err_ok": True,
                    })
                continue
            for i, report in enumerate(definetti_gap(choi, probes, k)):
                rows.append({
                    "m": m,
                    "k": k,
                    "probe": i,
                    "success": report.success,
                    "gap": report.gap,
                    "gap_bound": report.gap_bound,
                    "gap_ok": report.gap_ok,
                    "p_err": report.p_err,
                    "p_err_bound": report.p_err_bound,
                    "p_err_ok": report.p_err_ok,
                })
    columns = ["m", "k", "probe", "success", "gap", "gap_bound", "gap_ok",
               "p_err", "p_err_bound", "p_err_ok"]
    return columns, rows


_RUNNERS = {
    "spectrum": cmd_spectrum,
    "dist": cmd_dist,
    "fidelity": cmd_fidelity,
    "tradeoff": cmd_tradeoff,
    "cloner-check": cmd_cloner_check,
}


# ---------------------------------------------------------------------------
# serialization

def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["schema"] + columns)
    for row in rows:
        out = [SCHEMA]
        for col in columns:
            v = row.get(col)
            if v is None:
                out.append("")
            elif isinstance(v, bool):
                out.append("true" if v else "false")
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(str(v))
        writer.writerow(out)
    return buf.getvalue()


def _json_text(columns, rows, command, cfg, seed) -> str:
    doc = {
        "meta": {
            "schema": SCHEMA,
            "version": __version__,
            "command": command,
            "seed": seed,
            "config": cfg,
        },
        "columns": columns,
        "rows": [{k: _fmt(row.get(k)) for k in columns} for row in rows],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="clocklat",
        description="Postselected clock replication experiments.",
    )
    parser.add_argument("command", choices=_COMMANDS)
    parser.add_argument("--config", required=True, help="experiment config (JSON)")
    parser.add_argument("--out", default=None, help="output path (default: stdout)")
    parser.add_argument("--format", choices=("csv", "json"), default=None)
    parser.add_argument("--threads", type=int, default=1,
                        help="worker hint for sweeps (results are identical)")
    parser.add_argument("--seed", type=int, default=None)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0

    try:
        cfg = _load_config(args.config)
        if cfg["run"] != args.command:
            raise ConfigError(
                f"config is for run={cfg['run']!r}, command line says {args.command!r}",
                field="run",
            )
        seed = args.seed if args.seed is not None else int(cfg.get("seed", DEFAULT_SEED))
        int(os.environ.get("CLOCKLAT_THREADS", args.threads))  # env override hook
        columns, rows = _RUNNERS[args.command](cfg, seed)
        fmt = args.format or cfg.get("output", {}).get("format", "csv")
        text = (
            _csv_text(columns, rows)
            if fmt == "csv"
            else _json_text(columns, rows, args.command, cfg, seed)
        )
        out_path = args.out or cfg.get("output", {}).get("path")
        if out_path:
            with open(out_path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CapExceededError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return 3
    except ConvergenceError as exc:
        print(f"did not converge: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
