"""Batch runner: ``landis-lab <subcommand> [--config FILE] [--seed N] [--out DIR] [key=value ...]``.

Every subcommand writes ``<out>/<subcommand>.csv`` (data rows) and
``<out>/<subcommand>.json`` (summary, contracts, verdicts).  Reports contain
no timestamps or timings, so the same config and seed give the same bytes.

Exit codes: 0 all contracts passed, 1 some contract failed (the JSON lists
the failures), 2 invalid configuration (nothing is written), 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import traceback
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from . import __version__
from . import besselkit, carleman, convexity, elliptic_uc, heat_sim
from .lattice import LatticeBox, LatticeField

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration; maps to exit code 2."""


@dataclass
class Outcome:
    columns: list
    rows: list
    summary: dict
    contracts: dict


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

DEFAULTS: dict[str, dict[str, Any]] = {
    "bessel-audit": {
        "n_min": -20, "n_max": 20,
        "arguments": [0.1, 1.0, 10.0, 1e3, 1e6],
        "tolerance": 1e-8,
        "wronskian_orders": [0, 1, 2, 5, 10, 20],
        "wronskian_arguments": [0.1, 0.5, 1.0, 5.0, 10.0, 25.0, 50.0],
        "wronskian_tol": 1e-8,
    },
    "heat-run": {
        "d": 1, "h": 0.25, "extent": 48, "problems": 20, "v_max": 3.0,
        "R": 5.0, "t_samples": 129, "dt_max": 1e-3, "tolerance": 1e-6,
        "time_dependent": False,
        "kernel_check": True,
        "kernel_cases": [[1, 1.0], [1, 0.25], [2, 1.0], [2, 0.25]],
        "mass_tol": 1e-10, "kernel_tol": 1e-8,
    },
    "convexity-audit": {
        "gammas": [1.0, 4.0], "hs": [0.5, 0.25, 0.1], "samples_per_case": 167,
        "extent": 20, "positivity_tol": 1e-10,
        "lambda_j": [-5, 4], "lambda_x": [1e-2, 1e4], "lambda_points": 10,
        "logconvexity_hs": [0.5, 0.25, 0.1], "logconvexity_gamma": 4.0,
        "logconvexity_radius": 30.0, "t_samples": 33, "n_hat_tol": 1e-6,
    },
    "carleman-audit": {
        "modes": ["parabolic", "elliptic"],
        "d": 1, "R": 20.0, "h": 0.05, "alpha": 0.0, "samples": 5, "n_time": 200,
        "field_kind": "shell",
        "pieces_fields": 2, "pieces_n_time": 800, "agreement_tol": 1e-6,
        "iii_ii_expected": 1.0, "ratio_tol": 1e-8,
        "elliptic_R": 30.0, "elliptic_h": 0.1, "elliptic_alpha": 0.0,
        "elliptic_samples": 20, "elliptic_tol": 1e-10,
    },
    "bounds-sweep": {
        "upper_dims": [1],
        "upper_gamma": 4.0, "upper_h": 0.02, "upper_R": [0.5, 1.0, 1.5],
        "upper_band": [-1.1, -0.9], "require_fine_scale": False,
        "discrete_mu": 0.36787944117144233, "discrete_Rh": 4.0,
        "discrete_hs": [0.08, 0.05, 0.02], "discrete_gap_tol": 0.1,
        "lower_h": 0.02, "lower_R": [5.0, 40.0], "lower_R_step": 2.5,
        "exponent_band": [1.9, 2.1], "min_r2": 0.99,
        "lower_discrete_hs": [0.5, 1.0], "lower_discrete_R": [4.0, 58.0],
        "lower_discrete_step": 2.0, "slope_stability": 0.1,
        "gap_gammas": [2.0, 4.0],
    },
    "uc-check": {
        "sources": ["bessel", "geometric"],
        "t0": 2.0, "n_max": 201, "recursion_N_max": 150,
        "geometric_ratio": 4.0, "geometric_shells": 60, "d": 1,
        "linear_h": 0.5, "linear_shells": 40,
    },
    "gaussian-limit": {
        "x": 1.0, "t": 1.0,
        "h_list": [1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625],
        "final_tol": 1e-3,
    },
}


def _parse_override(item: str) -> tuple[str, Any]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key, value


def _coerce(key: str, value: Any, default: Any) -> Any:
    """Match the type of the default; ints are accepted where floats are expected."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"{key} must be finite")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{key} must be a list")
        if default:
            proto = default[0]
            return [_coerce(f"{key}[{i}]", v, proto) for i, v in enumerate(value)]
        return value
    raise ConfigError(f"unsupported setting {key}")


def load_config(sub: str, path: str | None, overrides: list[str]) -> dict:
    cfg = {k: (list(v) if isinstance(v, list) else v) for k, v in DEFAULTS[sub].items()}
    given: dict[str, Any] = {}
    if path is not None:
        try:
            data = tomllib.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file is not valid TOML: {exc}") from exc
        if sub in data and isinstance(data[sub], dict):
            data = data[sub]
        given.update(data)
    for item in overrides:
        k, v = _parse_override(item)
        given[k] = v
    for k, v in given.items():
        if k not in cfg:
            raise ConfigError(f"unknown setting {k!r} for {sub}")
        cfg[k] = _coerce(k, v, DEFAULTS[sub][k])
    VALIDATORS[sub](cfg)
    return cfg


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _pos(cfg, *keys):
    for k in keys:
        _require(cfg[k] > 0, f"{k} must be positive")


def _nonempty(cfg, *keys):
    for k in keys:
        _require(len(cfg[k]) > 0, f"{k} must not be empty")


def _pair(cfg, key):
    _require(len(cfg[key]) == 2 and cfg[key][0] < cfg[key][1],
             f"{key} must be an increasing pair [lo, hi]")


def _validate_bessel(cfg):
    _require(cfg["n_min"] <= cfg["n_max"], "n_min must not exceed n_max")
    _nonempty(cfg, "arguments", "wronskian_orders", "wronskian_arguments")
    _require(all(x > 0 for x in cfg["arguments"] + cfg["wronskian_arguments"]),
             "arguments must be positive")
    _pos(cfg, "tolerance", "wronskian_tol")


def _validate_heat(cfg):
    _require(cfg["d"] in (1, 2, 3), "d must be 1, 2 or 3")
    _pos(cfg, "h", "R", "dt_max", "tolerance", "mass_tol", "kernel_tol")
    _require(cfg["extent"] >= 4, "extent must be at least 4")
    _require(cfg["problems"] >= 1, "problems must be at least 1")
    _require(cfg["v_max"] >= 0, "v_max must be nonnegative")
    _require(cfg["t_samples"] >= 3, "t_samples must be at least 3")
    _require(cfg["R"] > 2 and cfg["R"] + 1 < cfg["extent"] * cfg["h"],
             "need 2 < R and R + 1 inside the box")
    for case in cfg["kernel_cases"]:
        _require(len(case) == 2 and int(case[0]) in (1, 2, 3) and case[1] > 0,
                 "kernel_cases entries are [d, h] with d in 1..3 and h > 0")


def _validate_convexity(cfg):
    _nonempty(cfg, "gammas", "hs", "logconvexity_hs")
    _require(all(g > 0 for g in cfg["gammas"]), "gammas must be positive")
    _require(all(h > 0 for h in cfg["hs"] + cfg["logconvexity_hs"]), "hs must be positive")
    _require(cfg["samples_per_case"] >= 1, "samples_per_case must be at least 1")
    _require(cfg["extent"] >= 6, "extent must be at least 6")
    _require(len(cfg["lambda_j"]) == 2 and cfg["lambda_j"][0] <= cfg["lambda_j"][1],
             "lambda_j must be [lo, hi]")
    _pair(cfg, "lambda_x")
    _require(cfg["lambda_x"][0] > 0, "lambda_x must be positive")
    _require(cfg["lambda_points"] >= 2, "lambda_points must be at least 2")
    _pos(cfg, "logconvexity_gamma", "logconvexity_radius", "n_hat_tol", "positivity_tol")
    _require(cfg["t_samples"] >= 3, "t_samples must be at least 3")


def _validate_carleman(cfg):
    modes = cfg["modes"]
    _require(len(modes) > 0 and set(modes) <= {"parabolic", "elliptic"},
             "modes must be a nonempty subset of ['parabolic', 'elliptic']")
    _require(cfg["d"] in (1, 2, 3), "d must be 1, 2 or 3")
    _pos(cfg, "R", "h", "elliptic_R", "elliptic_h", "agreement_tol", "ratio_tol",
         "elliptic_tol")
    _require(cfg["alpha"] >= 0 and cfg["elliptic_alpha"] >= 0, "alpha must be nonnegative")
    _require(cfg["samples"] >= 1 and cfg["elliptic_samples"] >= 1, "samples must be positive")
    _require(cfg["n_time"] >= 16 and cfg["pieces_n_time"] >= 16, "time grids need >= 16 points")
    _require(cfg["pieces_fields"] >= 0, "pieces_fields must be nonnegative")
    _require(cfg["field_kind"] in ("shell", "cutoff"), "field_kind must be shell or cutoff")
    if "parabolic" in modes:
        alpha = cfg["alpha"] or carleman.alpha_select(cfg["R"], cfg["h"], cfg["d"])
        try:
            conf = carleman.CarlemanConfig(alpha=alpha, R=cfg["R"], h=cfg["h"], d=cfg["d"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        rep = carleman.check_carleman_conditions(conf)
        _require(rep.valid, f"Carleman conditions fail for R={cfg['R']}, h={cfg['h']}, "
                            f"alpha={alpha}: {rep.verdict}")
    if "elliptic" in modes:
        _require(cfg["elliptic_R"] >= 1, "elliptic_R must be at least 1")
        _require(cfg["elliptic_alpha"] > 0 or cfg["elliptic_h"] < 1,
                 "automatic elliptic alpha needs elliptic_h < 1")


def _validate_bounds(cfg):
    _require(all(d in (1, 2, 3) for d in cfg["upper_dims"]), "upper_dims entries must be 1, 2 or 3")
    _nonempty(cfg, "upper_dims", "upper_R", "discrete_hs", "lower_discrete_hs", "gap_gammas")
    _pos(cfg, "upper_gamma", "upper_h", "discrete_mu", "discrete_Rh", "lower_h",
         "lower_R_step", "lower_discrete_step", "discrete_gap_tol", "slope_stability")
    _require(all(r > 0 for r in cfg["upper_R"]), "upper_R must be positive")
    _pair(cfg, "upper_band")
    _pair(cfg, "exponent_band")
    _pair(cfg, "lower_R")
    _pair(cfg, "lower_discrete_R")
    _require(0 < cfg["min_r2"] <= 1, "min_r2 must lie in (0, 1]")
    _require(all(0 < h < 0.1 for h in cfg["discrete_hs"]),
             "discrete upper bound needs 0 < h < 0.1")
    _require(cfg["discrete_Rh"] >= 2.0 / (math.e * cfg["discrete_mu"]),
             "discrete upper bound needs R h >= 2/(e mu)")
    _require(all(g > 0 for g in cfg["gap_gammas"]), "gap_gammas must be positive")
    n_lower = len(np.arange(cfg["lower_R"][0], cfg["lower_R"][1] + 1e-9, cfg["lower_R_step"]))
    _require(n_lower >= 4, "lower_R grid needs at least 4 points")


def _validate_uc(cfg):
    srcs = cfg["sources"]
    _require(len(srcs) > 0 and set(srcs) <= {"bessel", "geometric", "linear_potential"},
             "sources must be a nonempty subset of bessel, geometric, linear_potential")
    _pos(cfg, "t0", "geometric_ratio", "linear_h")
    _require(cfg["n_max"] >= 4, "n_max must be at least 4")
    _require(1 <= cfg["recursion_N_max"] < cfg["n_max"], "recursion_N_max must lie in [1, n_max)")
    _require(cfg["geometric_shells"] >= 2 and cfg["linear_shells"] >= 2, "need at least 2 shells")
    _require(cfg["d"] in (1, 2, 3), "d must be 1, 2 or 3")


def _validate_gaussian(cfg):
    _pos(cfg, "x", "t", "final_tol")
    _nonempty(cfg, "h_list")
    for h in cfg["h_list"]:
        n = round(1.0 / h) if h > 0 else 0
        _require(h > 0 and n >= 1 and abs(n * h - 1.0) <= 1e-12,
                 f"h_list entries must be reciprocals of integers, got {h}")


VALIDATORS: dict[str, Callable[[dict], None]] = {
    "bessel-audit": _validate_bessel,
    "heat-run": _validate_heat,
    "convexity-audit": _validate_convexity,
    "carleman-audit": _validate_carleman,
    "bounds-sweep": _validate_bounds,
    "uc-check": _validate_uc,
    "gaussian-limit": _validate_gaussian,
}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _child_rngs(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def run_bessel(cfg: dict, seed: int) -> Outcome:
    orders = range(cfg["n_min"], cfg["n_max"] + 1)
    rep = besselkit.audit_bessel_inequalities(orders, cfg["arguments"], cfg["tolerance"])
    d = rep.to_dict()
    rows = []
    for rec in d["inequalities"]:
        where = rec.get("argmin") or [None, None]
        rows.append({"quantity": rec["name"], "strict": rec["strict"],
                     "min_margin": rec["min_margin"], "n": where[0], "x": where[1],
                     "count": rec["count"], "passed": rec["passed"]})
    wr = []
    for n in cfg["wronskian_orders"]:
        for x in cfg["wronskian_arguments"]:
            defect = besselkit.wronskian_defect(n, x)
            wr.append(defect)
            rows.append({"quantity": "wronskian", "strict": False, "min_margin": -defect,
                         "n": n, "x": x, "count": 1, "passed": defect <= cfg["wronskian_tol"]})
    contracts = {"bessel_inequalities": rep.passed(),
                 "wronskian": max(wr) <= cfg["wronskian_tol"]}
    summary = {"inequalities": d, "wronskian_max": max(wr)}
    return Outcome(["quantity", "strict", "min_margin", "n", "x", "count", "passed"],
                   rows, summary, contracts)


def run_heat(cfg: dict, seed: int) -> Outcome:
    box = LatticeBox(cfg["d"], cfg["h"], cfg["extent"])
    grid = np.linspace(0.0, 1.0, cfg["t_samples"])
    rows, energy_ok, cacc_ok = [], True, True
    for i, rng in enumerate(_child_rngs(seed, cfg["problems"])):
        prob = heat_sim.random_bounded_problem(box, rng, cfg["v_max"],
                                               time_dependent=cfg["time_dependent"],
                                               t_grid=grid)
        traj = heat_sim.solve(prob, dt_max=cfg["dt_max"])
        en = heat_sim.audit_energy(traj, cfg["tolerance"])
        ca = heat_sim.audit_caccioppoli(traj, cfg["R"])
        energy_ok &= en.passed
        cacc_ok &= ca.finite
        rows.append({"record": "problem", "index": i, "d": cfg["d"], "h": cfg["h"],
                     "v_sup": prob.v_sup, "energy_min_slack": en.min_slack,
                     "energy_argmin": en.argmin, "caccioppoli_C2": ca.C2,
                     "mass_error": "", "kernel_error": ""})
    contracts = {"energy": energy_ok, "caccioppoli_finite": cacc_ok}
    if cfg["kernel_check"]:
        mass_ok = kern_ok = True
        for j, (d, h) in enumerate(cfg["kernel_cases"]):
            d = int(d)
            ext = int(math.ceil(16.0 / h))
            kbox = LatticeBox(d, float(h), ext)
            prob = heat_sim.HeatProblem(kbox, LatticeField.delta(kbox), None, 0.0,
                                        np.linspace(0.0, 1.0, 5))
            u = heat_sim.solve(prob, dt_max=cfg["dt_max"]).snapshots[-1]
            ref = heat_sim.free_kernel_solution(kbox, 1.0)
            merr = abs(heat_sim.total_mass(u) - 1.0)
            kerr = float(np.abs(u.values - ref.values).max() / np.abs(ref.values).max())
            mass_ok &= merr < cfg["mass_tol"]
            kern_ok &= kerr <= cfg["kernel_tol"]
            rows.append({"record": "kernel", "index": j, "d": d, "h": float(h), "v_sup": 0.0,
                         "energy_min_slack": "", "energy_argmin": "", "caccioppoli_C2": "",
                         "mass_error": merr, "kernel_error": kerr})
        contracts.update({"mass_conservation": mass_ok, "kernel_agreement": kern_ok})
    summary = {"problems": cfg["problems"],
               "worst_energy_slack": min(r["energy_min_slack"] for r in rows
                                         if r["record"] == "problem"),
               "max_C2": max(r["caccioppoli_C2"] for r in rows if r["record"] == "problem")}
    return Outcome(["record", "index", "d", "h", "v_sup", "energy_min_slack", "energy_argmin",
                    "caccioppoli_C2", "mass_error", "kernel_error"], rows, summary, contracts)


def run_convexity(cfg: dict, seed: int) -> Outcome:
    rows = []
    cases = [(g, h) for g in cfg["gammas"] for h in cfg["hs"]]
    worst_pos = math.inf
    for (g, h), rng in zip(cases, _child_rngs(seed, len(cases))):
        spec = convexity.WeightSpec("delta_interp", h, gamma=g)
        box = LatticeBox(1, h, cfg["extent"])
        case_min = math.inf
        for _ in range(cfg["samples_per_case"]):
            f = convexity.random_interior_field(box, rng)
            val = convexity.commutator_direct(f, spec) / convexity.commutator_scale(f)
            case_min = min(case_min, val)
        worst_pos = min(worst_pos, case_min)
        rows.append({"check": "commutator", "gamma": g, "h": h, "x": "", "delta": "",
                     "value": case_min, "passed": case_min >= -cfg["positivity_tol"]})
    lam_margin = math.inf
    lam1_min = math.inf
    js = range(cfg["lambda_j"][0], cfg["lambda_j"][1] + 1)
    xs = np.geomspace(cfg["lambda_x"][0], cfg["lambda_x"][1], cfg["lambda_points"])
    deltas = np.linspace(1.0 / cfg["lambda_points"], 1.0, cfg["lambda_points"])
    n_lam = 0
    for x in xs:
        bound = convexity.lambda_lower_bound(float(x))
        x_min = math.inf
        for j in js:
            for dl in deltas:
                x_min = min(x_min, convexity.lambda_delta(j, float(x), float(dl)) - bound)
                n_lam += 1
            lam1_min = min(lam1_min, convexity.lambda_delta(j, float(x), 1.0))
        lam_margin = min(lam_margin, x_min)
        rows.append({"check": "lambda_bound", "gamma": "", "h": "", "x": float(x), "delta": "",
                     "value": x_min, "passed": x_min >= 0.0})
    nhat_ok = True
    for h in cfg["logconvexity_hs"]:
        box = LatticeBox(1, h, int(round(cfg["logconvexity_radius"] / h)))
        ser = heat_sim.example_series(box, np.linspace(0.0, 1.0, cfg["t_samples"]))
        spec = convexity.WeightSpec("close_to_continuum", h, gamma=cfg["logconvexity_gamma"])
        rep = convexity.audit_logconvexity(convexity.weighted_energy(ser, spec), 0.0)
        ok = rep.N_hat <= cfg["n_hat_tol"]
        nhat_ok &= ok
        rows.append({"check": "log_convexity", "gamma": cfg["logconvexity_gamma"], "h": h,
                     "x": "", "delta": "", "value": rep.N_hat, "passed": ok})
    contracts = {"commutator_positivity": worst_pos >= -cfg["positivity_tol"],
                 "lambda_lower_bound": lam_margin >= 0.0,
                 "lambda_one_positive": lam1_min > 0.0,
                 "log_convexity": nhat_ok}
    summary = {"commutator_samples": len(cases) * cfg["samples_per_case"],
               "worst_commutator_over_scale": worst_pos, "lambda_points": n_lam,
               "lambda_min_margin": lam_margin, "lambda_one_min": lam1_min}
    return Outcome(["check", "gamma", "h", "x", "delta", "value", "passed"],
                   rows, summary, contracts)


def run_carleman(cfg: dict, seed: int) -> Outcome:
    rows, summary, contracts = [], {}, {}
    rng_par, rng_pieces, rng_ell = np.random.SeedSequence(seed).spawn(3)
    if "parabolic" in cfg["modes"]:
        alpha = cfg["alpha"] or carleman.alpha_select(cfg["R"], cfg["h"], cfg["d"])
        conf = carleman.CarlemanConfig(alpha=alpha, R=cfg["R"], h=cfg["h"], d=cfg["d"])
        audit = carleman.audit_carleman_inequality(
            conf, cfg["samples"], int(rng_par.generate_state(1)[0]), cfg["n_time"],
            cfg["field_kind"])
        for i, r in enumerate(audit.ratios):
            rows.append({"mode": "parabolic", "index": i, "quantity": "lhs_over_rhs", "value": r})
        summary["parabolic"] = {"config": conf.to_dict(), "audit": audit.to_dict()}
        contracts["parabolic_finite"] = math.isfinite(audit.C_hat)
        if cfg["pieces_fields"] > 0:
            rng = np.random.default_rng(rng_pieces)
            box = carleman.carleman_box(conf)
            worst_agree, worst_ratio = 0.0, 0.0
            for i in range(cfg["pieces_fields"]):
                f = carleman.random_in_support_field(conf, rng, box)
                p = carleman.commutator_pieces(conf, f, n_time=cfg["pieces_n_time"])
                agree = p.refinement["agreement_extrapolated"]
                ratio = p.ratio_iii_ii()
                worst_agree = max(worst_agree, agree)
                worst_ratio = max(worst_ratio, abs(ratio - cfg["iii_ii_expected"]))
                rows.append({"mode": "pieces", "index": i, "quantity": "agreement", "value": agree})
                rows.append({"mode": "pieces", "index": i, "quantity": "iii_over_ii", "value": ratio})
                rows.append({"mode": "pieces", "index": i, "quantity": "IV", "value": p.IV})
            summary["pieces"] = {"fields": cfg["pieces_fields"], "worst_agreement": worst_agree,
                                 "worst_ratio_deviation": worst_ratio,
                                 "iii_ii_expected": cfg["iii_ii_expected"]}
            contracts["pieces_agreement"] = worst_agree <= cfg["agreement_tol"]
            contracts["iii_ii_ratio"] = worst_ratio <= cfg["ratio_tol"]
    if "elliptic" in cfg["modes"]:
        if cfg["elliptic_alpha"] > 0:
            choice = {"alpha": cfg["elliptic_alpha"], "case": "given", "beta": None}
        else:
            choice = elliptic_uc.alpha_select_elliptic(cfg["elliptic_R"], cfg["elliptic_h"],
                                                       cfg["d"]).to_dict()
        conf = carleman.CarlemanConfig(alpha=choice["alpha"], R=cfg["elliptic_R"],
                                       h=cfg["elliptic_h"], d=cfg["d"])
        audit = elliptic_uc.audit_carleman_elliptic(
            conf, cfg["elliptic_samples"], int(rng_ell.generate_state(1)[0]), cfg["elliptic_tol"])
        for i, r in enumerate(audit.ratios):
            rows.append({"mode": "elliptic", "index": i, "quantity": "lhs_over_rhs", "value": r})
        summary["elliptic"] = {"alpha_choice": choice, "audit": audit.to_dict()}
        contracts["elliptic"] = audit.passed
    return Outcome(["mode", "index", "quantity", "value"], rows, summary, contracts)


def _grid(lo: float, hi: float, step: float) -> list[float]:
    n = int(math.floor((hi - lo) / step + 1e-9))
    return [lo + k * step for k in range(n + 1)]


def run_bounds(cfg: dict, seed: int) -> Outcome:
    rows, summary, contracts = [], {}, {}

    def row(h, R, regime, quantity, value, alpha="", d=1):
        rows.append({"d": d, "h": h, "R": R, "Rh": R * h if R != "" else "", "regime": regime,
                     "alpha": alpha, "quantity": quantity, "logmag": value})

    lo, hi = cfg["upper_band"]
    norm = {}
    for d in cfg["upper_dims"]:
        norm[str(d)] = []
        for R in cfg["upper_R"]:
            rep = carleman.upper_bound_ctc(cfg["upper_gamma"], R, cfg["upper_h"], d,
                                           require_fine_scale=cfg["require_fine_scale"])
            norm[str(d)].append(rep.normalized)
            row(cfg["upper_h"], R, "close_to_continuum", "upper_log_sup", rep.log_sup, d=d)
            row(cfg["upper_h"], R, "close_to_continuum", "upper_normalized", rep.normalized, d=d)
    contracts["upper_ctc_band"] = all(lo <= v <= hi for vs in norm.values() for v in vs)
    summary["upper_ctc"] = {"normalized": norm, "band": [lo, hi]}
    gaps = []
    for h in cfg["discrete_hs"]:
        R = cfg["discrete_Rh"] / h
        rep = carleman.upper_bound_discrete(cfg["discrete_mu"], R, h, 1)
        gaps.append(rep.relative_gap)
        row(h, R, "purely_discrete", "upper_log_sup", rep.log_sup)
        row(h, R, "purely_discrete", "upper_asymptotic", rep.asymptotic)
    contracts["upper_discrete_asymptotics"] = max(gaps) <= cfg["discrete_gap_tol"]
    summary["upper_discrete"] = {"relative_gaps": gaps}

    Rs = _grid(cfg["lower_R"][0], cfg["lower_R"][1], cfg["lower_R_step"])
    fit = carleman.lower_bound_audit(Rs, cfg["lower_h"])
    for pt in fit.points:
        row(cfg["lower_h"], pt["R"], "close_to_continuum", "lower_log_mass", pt["log_mass"],
            carleman.alpha_select(pt["R"], cfg["lower_h"], 1))
    ctc = fit.ctc
    elo, ehi = cfg["exponent_band"]
    contracts["lower_ctc_exponent"] = (ctc is not None and elo <= ctc["exponent"] <= ehi
                                       and ctc["exponent_fit_r2"] >= cfg["min_r2"]
                                       and ctc["r2"] >= cfg["min_r2"])
    summary["lower_ctc"] = ctc
    slopes, disc = [], {}
    for h in cfg["lower_discrete_hs"]:
        Rd = [R for R in _grid(cfg["lower_discrete_R"][0], cfg["lower_discrete_R"][1],
                               cfg["lower_discrete_step"])]
        f = carleman.lower_bound_audit(Rd, h)
        for pt in f.points:
            row(h, pt["R"], "purely_discrete", "lower_log_mass", pt["log_mass"],
                carleman.alpha_select(pt["R"], h, 1))
        disc[str(h)] = f.discrete
        if f.discrete is not None:
            slopes.append(f.discrete["slope"])
    ok = len(slopes) == len(cfg["lower_discrete_hs"]) and all(
        disc[k]["r2"] >= cfg["min_r2"] for k in disc)
    if ok and slopes:
        spread = (max(slopes) - min(slopes)) / abs(float(np.mean(slopes)))
        ok = spread <= cfg["slope_stability"]
        summary["lower_discrete_spread"] = spread
    contracts["lower_discrete_slope"] = bool(ok)
    summary["lower_discrete"] = disc
    if ctc is not None:
        summary["landis_gap"] = [carleman.landis_gap(g, ctc["c_lower"], 1).to_dict()
                                 for g in cfg["gap_gammas"]]
    return Outcome(["d", "h", "R", "Rh", "regime", "alpha", "quantity", "logmag"],
                   rows, summary, contracts)


def run_uc(cfg: dict, seed: int) -> Outcome:
    rows, summary, contracts = [], {}, {}

    def add(source, s, rec=None, scan=None):
        margins = {r["N"]: r["margin"] for r in rec.rows} if rec else {}
        thr = {r["N"]: r for r in scan.rows} if scan else {}
        for N in range(1, s.n_shells + 1):
            rows.append({"source": source, "N": N, "log_M": float(s.log_M[N - 1]),
                         "q": float(s.q[N - 1]), "factor": s.factor(N),
                         "margin": margins.get(N, ""),
                         "log_threshold": thr[N]["log_threshold"] if N in thr else "",
                         "verdict": thr[N]["verdict"] if N in thr else ""})

    if "bessel" in cfg["sources"]:
        prob = elliptic_uc.bessel_testbed(cfg["n_max"], cfg["t0"])
        res = elliptic_uc.residual_report(prob)
        s = elliptic_uc.shell_extract(prob)
        rec = elliptic_uc.uc_recursion_audit(s)
        scan = elliptic_uc.threshold_scan(s)
        upto = [r["margin"] for r in rec.rows if r["N"] <= cfg["recursion_N_max"]]
        contracts["bessel_recursion"] = min(upto) >= 0.0
        contracts["bessel_never_flagged"] = not any(scan.flags)
        contracts["bessel_residual"] = res.relative_to_sup <= elliptic_uc.RESIDUAL_GATE
        N = cfg["recursion_N_max"]
        summary["bessel"] = {
            "residual": res.to_dict(), "worst_margin": min(upto),
            "threshold_N": N,
            "log_threshold_product": elliptic_uc.uc_threshold(s, N).logmag,
            "log_threshold_bounded": elliptic_uc.bounded_potential_threshold(s, N, prob.V_bound).logmag,
            "V_window_sup": prob.V_bound, "flagged": any(scan.flags)}
        add("bessel", s, rec, scan)
    if "geometric" in cfg["sources"]:
        s = elliptic_uc.ShellData.geometric(cfg["geometric_ratio"], cfg["geometric_shells"],
                                            cfg["d"])
        scan = elliptic_uc.threshold_scan(s)
        contracts["geometric_flagged"] = (scan.N0 is not None) == (
            cfg["geometric_ratio"] > 4.0 * cfg["d"] - 1.0)
        summary["geometric"] = {"ratio": cfg["geometric_ratio"], "N0": scan.N0,
                                "note": "synthetic sequence, not a solution; threshold "
                                        "comparison only"}
        add("geometric", s, None, scan)
    if "linear_potential" in cfg["sources"]:
        h, n = cfg["linear_h"], cfg["linear_shells"]
        s = elliptic_uc.linear_potential_shells(h, n, cfg["d"])
        prod = [elliptic_uc.uc_threshold(s, N).logmag for N in range(1, n + 1)]
        ex = [elliptic_uc.linear_potential_threshold(s, N).logmag for N in range(1, n + 1)]
        contracts["linear_potential_chain"] = all(e <= p + 1e-12 for e, p in zip(ex, prod))
        summary["linear_potential"] = {"h": h, "log_threshold_product": prod[-1],
                                       "log_threshold_simplified": ex[-1]}
        add("linear_potential", s)
    return Outcome(["source", "N", "log_M", "q", "factor", "margin", "log_threshold", "verdict"],
                   rows, summary, contracts)


def run_gaussian(cfg: dict, seed: int) -> Outcome:
    table = heat_sim.gaussian_limit(cfg["x"], cfg["t"], cfg["h_list"])
    rows = [{"h": r.h, "discrete": r.discrete, "limit": r.limit, "error": r.error} for r in table]
    ok = heat_sim.gaussian_limit_passes(table, cfg["final_tol"])
    return Outcome(["h", "discrete", "limit", "error"], rows,
                   {"limit": table[-1].limit, "final": table[-1].discrete},
                   {"converges": ok})


RUNNERS: dict[str, Callable[[dict, int], Outcome]] = {
    "bessel-audit": run_bessel,
    "heat-run": run_heat,
    "convexity-audit": run_convexity,
    "carleman-audit": run_carleman,
    "bounds-sweep": run_bounds,
    "uc-check": run_uc,
    "gaussian-limit": run_gaussian,
}


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if obj is None or isinstance(obj, (int, str)):
        return obj
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    return str(obj)


def _cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def render_csv(outcome: Outcome) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(outcome.columns)
    for r in outcome.rows:
        w.writerow([_cell(r.get(c, "")) for c in outcome.columns])
    return buf.getvalue()


def render_json(sub: str, cfg: dict, seed: int, outcome: Outcome) -> str:
    failures = sorted(k for k, v in outcome.contracts.items() if not v)
    doc = {"schema_version": SCHEMA_VERSION, "tool_version": __version__, "subcommand": sub,
           "seed": seed, "config": cfg, "contracts": outcome.contracts,
           "passed": not failures, "failures": failures, "summary": outcome.summary,
           "csv_columns": outcome.columns}
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="landis-lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name in RUNNERS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="TOML file (top level or a [<subcommand>] table)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default="landis_out", help="output directory")
        if name == "gaussian-limit":
            sp.add_argument("--x", type=float)
            sp.add_argument("--t", type=float)
        sp.add_argument("overrides", nargs="*", metavar="key=value")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    sub = args.subcommand
    overrides = list(args.overrides)
    for flag in ("x", "t"):
        if getattr(args, flag, None) is not None:
            overrides.append(f"{flag}={getattr(args, flag)!r}")
    try:
        if args.seed < 0:
            raise ConfigError("seed must be nonnegative")
        cfg = load_config(sub, args.config, overrides)
    except ConfigError as exc:
        print(f"landis-lab {sub}: invalid configuration: {exc}", file=sys.stderr)
        return 2
    try:
        outcome = RUNNERS[sub](cfg, args.seed)
        csv_text = render_csv(outcome)
        json_text = render_json(sub, cfg, args.seed, outcome)
    except Exception:  # noqa: BLE001 - every unexpected failure maps to exit 3
        traceback.print_exc()
        return 3
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{sub}.csv").write_text(csv_text)
    (out / f"{sub}.json").write_text(json_text)
    failures = [k for k, v in outcome.contracts.items() if not v]
    if failures:
        print(f"landis-lab {sub}: contract failures: {', '.join(sorted(failures))}",
              file=sys.stderr)
        return 1
    print(f"landis-lab {sub}: all {len(outcome.contracts)} contracts passed "
          f"({out / (sub + '.json')})")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
