"""End-to-end acceptance checks, one test per criterion.

Each test records a verdict line in RESULTS; tests/conftest.py prints them
at the end of the run.  Runtime budgets are asserted alongside the numbers.
"""

import math
import time

import numpy as np
import pytest

from landis_lab import besselkit, carleman, cli, convexity, elliptic_uc, heat_sim
from landis_lab.lattice import LatticeBox, LatticeField

pytestmark = pytest.mark.acceptance

RESULTS: dict[int, tuple[bool, str]] = {}


def record(k: int, checks: dict[str, bool], detail: str, elapsed: float, budget: float | None):
    if budget is not None:
        checks = {**checks, f"runtime<{budget:g}s": elapsed < budget}
    failed = [name for name, ok in checks.items() if not ok]
    ok = not failed
    line = f"{detail}; {elapsed:.1f}s" + (f"; failed: {', '.join(failed)}" if failed else "")
    RESULTS[k] = (ok, line)
    print(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {line}")
    assert ok, line


def test_criterion_01_bessel_inequalities_and_wronskian():
    t0 = time.perf_counter()
    rep = besselkit.audit_bessel_inequalities(range(-20, 21), [0.1, 1.0, 10.0, 1e3, 1e6], 1e-8)
    worst = min(r.min_margin for r in rep.records.values())
    wr = max(besselkit.wronskian_defect(n, x)
             for n in range(0, 21) for x in (0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 35.0, 50.0))
    el = time.perf_counter() - t0
    record(1, {"inequalities": rep.passed() and worst >= -1e-8, "wronskian": wr <= 1e-8},
           f"worst margin {worst:.3e}, max Wronskian defect {wr:.2e}", el, 10)


def test_criterion_02_heat_kernel():
    t0 = time.perf_counter()
    mass, agree = 0.0, 0.0
    for d in (1, 2):
        for h in (1.0, 0.25):
            box = LatticeBox(d, h, int(math.ceil(16.0 / h)))
            prob = heat_sim.HeatProblem(box, LatticeField.delta(box), None, 0.0,
                                        np.linspace(0.0, 1.0, 5))
            u = heat_sim.solve(prob).snapshots[-1]
            ref = heat_sim.free_kernel_solution(box, 1.0)
            mass = max(mass, abs(heat_sim.total_mass(u) - 1.0))
            agree = max(agree, float(np.abs(u.values - ref.values).max() / np.abs(ref.values).max()))
    el = time.perf_counter() - t0
    record(2, {"mass": mass < 1e-10, "closed_form": agree <= 1e-8},
           f"max |sum u - 1| {mass:.2e}, max relative kernel gap {agree:.2e}", el, 60)


def test_criterion_03_energy_and_caccioppoli():
    t0 = time.perf_counter()
    box = LatticeBox(1, 0.25, 48)
    grid = np.linspace(0.0, 1.0, 129)
    worst, c2 = math.inf, []
    for rng in [np.random.default_rng(s) for s in np.random.SeedSequence(2024).spawn(20)]:
        prob = heat_sim.random_bounded_problem(box, rng, 3.0, t_grid=grid)
        traj = heat_sim.solve(prob)
        worst = min(worst, heat_sim.audit_energy(traj, 1e-6).min_slack)
        c2.append(heat_sim.audit_caccioppoli(traj, 5.0).C2)
    el = time.perf_counter() - t0
    record(3, {"energy": worst >= -1e-6, "caccioppoli": all(math.isfinite(c) for c in c2)},
           f"worst energy slack {worst:.3e}, max Caccioppoli C2 {max(c2):.3f}", el, 120)


def test_criterion_04_commutator_positivity_and_lambda_bound():
    t0 = time.perf_counter()
    cases = [(g, h) for g in (1.0, 4.0) for h in (0.5, 0.25, 0.1)]
    worst, n = math.inf, 0
    for (g, h), rng in zip(cases, [np.random.default_rng(s) for s in np.random.SeedSequence(4).spawn(6)]):
        spec = convexity.WeightSpec("delta_interp", h, gamma=g)
        box = LatticeBox(1, h, 20)
        for _ in range(167):
            f = convexity.random_interior_field(box, rng)
            worst = min(worst, convexity.commutator_direct(f, spec) / convexity.commutator_scale(f))
            n += 1
    lam, m = math.inf, 0
    for x in np.geomspace(1e-2, 1e4, 10):
        bound = convexity.lambda_lower_bound(float(x))
        for j in range(-5, 5):
            for dl in np.linspace(0.1, 1.0, 10):
                lam = min(lam, convexity.lambda_delta(j, float(x), float(dl)) - bound)
                m += 1
    el = time.perf_counter() - t0
    record(4, {"positivity": worst >= -1e-10, "lambda_bound": lam >= 0.0,
               "sample_counts": n >= 1000 and m >= 1000},
           f"{n} fields, min <[S,A]f,f>/scale {worst:.3e}; {m} grid points, "
           f"min Lambda margin {lam:.3e}", el, 120)


def test_criterion_05_log_convexity_example():
    t0 = time.perf_counter()
    nh = {}
    for h in (0.5, 0.25, 0.1):
        box = LatticeBox(1, h, int(round(30.0 / h)))
        ser = heat_sim.example_series(box, np.linspace(0.0, 1.0, 33))
        spec = convexity.WeightSpec("close_to_continuum", h, gamma=4.0)
        nh[h] = convexity.audit_logconvexity(convexity.weighted_energy(ser, spec), 0.0).N_hat
    el = time.perf_counter() - t0
    record(5, {"N_hat": max(nh.values()) <= 1e-6},
           "N_hat " + ", ".join(f"h={h}: {v:.2e}" for h, v in nh.items()), el, 60)


def test_criterion_06_parabolic_carleman_identities():
    """(III) = 2(II) and direct-versus-pieces agreement on 50 in-support fields.

    The ratio check is kept exactly as stated even though the computed ratio
    is 1: both pieces reduce to the same sum, so this criterion is expected
    to fail (see the decisions ledger).
    """
    t0 = time.perf_counter()
    cfg = carleman.CarlemanConfig(alpha=carleman.alpha_select(10.0, 0.1), R=10.0, h=0.1)
    box = carleman.carleman_box(cfg)
    rng = np.random.default_rng(6)
    ratio_dev, agree = 0.0, 0.0
    ratios = []
    for _ in range(50):
        f = carleman.random_in_support_field(cfg, rng, box)
        p = carleman.commutator_pieces(cfg, f, n_time=800)
        ratios.append(p.ratio_iii_ii())
        ratio_dev = max(ratio_dev, abs(p.III - 2.0 * p.II) / abs(2.0 * p.II))
        agree = max(agree, p.refinement["agreement_extrapolated"])
    el = time.perf_counter() - t0
    record(6, {"III_equals_2II": ratio_dev <= 1e-8, "agreement": agree <= 1e-6},
           f"(III)/(II) in [{min(ratios):.12f}, {max(ratios):.12f}] "
           f"(max deviation from 2: {ratio_dev:.3e}); worst agreement after refinement {agree:.2e}",
           el, 180)


def test_criterion_07_regime_exponents():
    t0 = time.perf_counter()
    ctc = carleman.lower_bound_audit(list(np.arange(5.0, 40.0 + 1e-9, 2.5)), 0.02).ctc
    slopes, r2s = [], []
    for h in (0.5, 1.0):
        fit = carleman.lower_bound_audit(list(np.arange(4.0, 58.0 + 1e-9, 2.0)), h).discrete
        slopes.append(fit["slope"])
        r2s.append(fit["r2"])
    spread = (max(slopes) - min(slopes)) / abs(float(np.mean(slopes)))
    el = time.perf_counter() - t0
    record(7, {"ctc_exponent": 1.9 <= ctc["exponent"] <= 2.1,
               "ctc_r2": ctc["r2"] >= 0.99 and ctc["exponent_fit_r2"] >= 0.99,
               "discrete_stability": spread <= 0.1, "discrete_r2": min(r2s) >= 0.99},
           f"exponent {ctc['exponent']:.4f} (R^2 {ctc['exponent_fit_r2']:.5f}); discrete slopes "
           f"{slopes[0]:.4f}, {slopes[1]:.4f} (spread {spread:.3f}, min R^2 {min(r2s):.5f})", el, 300)


def test_criterion_08_upper_bound_ratio():
    t0 = time.perf_counter()
    d = 1
    vals = [carleman.upper_bound_ctc(4.0, R, 0.02, d, require_fine_scale=False).normalized
            for R in (0.5, 1.0, 1.5)]
    el = time.perf_counter() - t0
    record(8, {"band": all(-1.1 * d <= v <= -0.9 * d for v in vals)},
           "log(sup ratio) gamma/R^2: " + ", ".join(f"{v:.4f}" for v in vals), el, 30)


def test_criterion_09_elliptic_testbed():
    t0 = time.perf_counter()
    prob = elliptic_uc.bessel_testbed(201, 2.0)
    res = elliptic_uc.residual_report(prob)
    rec = elliptic_uc.uc_recursion_audit(elliptic_uc.shell_extract(prob))
    worst = min(r["margin"] for r in rec.rows if r["N"] <= 150)
    fit = elliptic_uc.jota_slope_fit(2.0, 50, 200)
    el = time.perf_counter() - t0
    record(9, {"residual": res.relative_to_sup <= 1e-10, "recursion": worst >= 0.0,
               "slope": fit.slope_error <= 0.05},
           f"residual {res.relative_to_sup:.2e}, worst recursion margin {worst:.4f}, "
           f"fitted slope {fit.a:.4f}", el, 30)


def test_criterion_10_uc_threshold():
    t0 = time.perf_counter()
    d = 1
    scan = elliptic_uc.threshold_scan(elliptic_uc.ShellData.geometric(4.0 * d, 60, d))
    tail_ok = scan.N0 is not None and all(scan.flags[scan.N0 - 1:])
    bessel = elliptic_uc.threshold_scan(elliptic_uc.shell_extract(elliptic_uc.bessel_testbed()))
    el = time.perf_counter() - t0
    record(10, {"synthetic_flagged": tail_ok, "testbed_unflagged": not any(bessel.flags)},
           f"(4d)^-N flagged from N0 = {scan.N0}; J testbed flags: {sum(bessel.flags)}", el, 10)


SUBCOMMANDS = list(cli.RUNNERS)


def test_criterion_11_determinism(tmp_path):
    t0 = time.perf_counter()
    same = {}
    for sub in SUBCOMMANDS:
        blobs = []
        for rep in ("a", "b"):
            out = tmp_path / rep
            cli.main([sub, "--seed", "11", "--out", str(out)])
            blobs.append(((out / f"{sub}.csv").read_bytes(), (out / f"{sub}.json").read_bytes()))
        same[sub] = blobs[0] == blobs[1]
    el = time.perf_counter() - t0
    record(11, same, f"{sum(same.values())}/{len(same)} subcommands byte-identical", el, None)
