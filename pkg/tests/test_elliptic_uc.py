import math

import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st

from landis_lab import elliptic_uc as eu
from landis_lab.carleman import CarlemanConfig, SupportError, carleman_box
from landis_lab.lattice import LatticeBox, LatticeField, LogLatticeField, laplacian_array
from tests import oracles


@pytest.fixture(scope="module")
def testbed():
    return eu.bessel_testbed()


def test_potential_sign():
    # J_{n-1} + J_{n+1} = (2n/t0) J_n, so the second difference is (2n/t0 - 2) J_n
    n = np.arange(-5, 6)
    assert np.allclose(eu.bessel_potential(n, 2.0), 2.0 - n)


def test_testbed_values_and_symmetry(testbed):
    lf = testbed.log_field()
    box = testbed.box
    for n in (0, 3, 40, 120):
        s, lg = oracles.j_value(n, 2.0)
        assert lf.signs[box.site((n,))] == s
        assert lf.logmags[box.site((n,))] == pytest.approx(lg, rel=1e-11, abs=1e-11)
        assert lf.signs[box.site((-n,))] == s * (-1) ** n
        assert lf.logmags[box.site((-n,))] == lf.logmags[box.site((n,))]


def test_testbed_residual(testbed):
    rep = eu.residual_report(testbed)
    assert rep.relative_to_sup <= 1e-10
    assert rep.backward <= 1e-12


def test_residual_catches_a_wrong_potential(testbed):
    wrong = eu.EllipticProblem(testbed.box, -testbed.V, testbed.V_bound, testbed.u)
    assert eu.residual_report(wrong).relative_to_sup > 1e-3


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([1, 2]))
def test_linear_and_log_residuals_agree(seed, d):
    rng = np.random.default_rng(seed)
    box = LatticeBox(d, 0.5, 6)
    u = LatticeField(box, rng.normal(size=box.shape))
    V = rng.uniform(-2, 2, box.shape)
    p = eu.EllipticProblem(box, V, 2.0, u)
    lin = eu.elliptic_residual(p).values
    ref = laplacian_array(u.values, 0.5) + V * u.values
    inner = tuple(slice(1, -1) for _ in range(d))
    assert np.allclose(lin[inner], ref[inner], atol=1e-12)
    logp = eu.EllipticProblem(box, V, 2.0, LogLatticeField.from_linear(u))
    assert np.allclose(eu.elliptic_residual(logp).values[inner], ref[inner], atol=1e-10)


def test_problem_validation():
    box = LatticeBox(1, 1.0, 5)
    u = LatticeField.zeros(box)
    with pytest.raises(ValueError):
        eu.EllipticProblem(box, np.full(box.shape, 3.0), 1.0, u)
    with pytest.raises(ValueError):
        eu.EllipticProblem(LatticeBox(1, 1.0, 6), np.zeros(13), 0.0, u)
    with pytest.raises(ValueError):
        eu.bessel_testbed(n_max=2)


def test_shell_recursion_holds_for_testbed(testbed):
    s = eu.shell_extract(testbed)
    assert s.q[0] == pytest.approx(3.0) and s.q[9] == pytest.approx(12.0)   # q_N = N + 2
    rep = eu.uc_recursion_audit(s)
    assert rep.passed
    assert all(r["margin"] >= 0 for r in rep.rows if r["N"] <= 150)


def test_recursion_is_gated_on_residual():
    with pytest.raises(eu.ResidualTooLarge):
        eu.uc_recursion_audit(eu.ShellData.geometric(4.0, 10))
    s = eu.ShellData(1.0, 1, np.zeros(5), np.zeros(5), residual=1e-3)
    with pytest.raises(eu.ResidualTooLarge):
        eu.uc_recursion_audit(s)


def test_metric_is_max_norm_only(testbed):
    with pytest.raises(eu.MetricError):
        eu.shell_extract(testbed, metric="euclidean")
    with pytest.raises(eu.MetricError):
        eu.ShellData(1.0, 1, np.zeros(3), np.zeros(3), metric="euclidean")


def test_jota_slope():
    fit = eu.jota_slope_fit()
    assert fit.slope_error <= 0.05
    assert fit.r2 > 0.9999


@pytest.mark.parametrize("ratio,flagged", [(4.0, True), (3.5, True), (3.0, False), (2.0, False)])
def test_geometric_threshold(ratio, flagged):
    scan = eu.threshold_scan(eu.ShellData.geometric(ratio, 40))
    assert any(scan.flags) == flagged
    if flagged:
        assert scan.N0 == 1 and all(scan.flags)


def test_threshold_with_transient():
    # slow decay for ten shells, then 4^-N: N0 is where the flags start for good
    lm = np.concatenate([-np.arange(10) * math.log(2.0),
                         -9 * math.log(2.0) - np.arange(1, 31) * math.log(4.0)])
    scan = eu.threshold_scan(eu.ShellData.synthetic(lm))
    assert scan.N0 is not None and scan.N0 > 1
    assert all(scan.flags[scan.N0 - 1:]) and not scan.flags[scan.N0 - 2]


def test_testbed_never_flagged(testbed):
    assert not any(eu.threshold_scan(eu.shell_extract(testbed)).flags)


def test_thresholds_order(testbed):
    s = eu.shell_extract(testbed)
    for N in (5, 50, 150):
        prod = eu.uc_threshold(s, N)
        bounded = eu.bounded_potential_threshold(s, N, testbed.V_bound)
        assert bounded <= prod
    lin = eu.linear_potential_shells(0.5, 30)
    for N in range(1, 31):
        assert eu.linear_potential_threshold(lin, N) <= eu.uc_threshold(lin, N)
    with pytest.raises(IndexError):
        eu.uc_threshold(lin, 31)


def test_delta_shell_sequence():
    # M_1 = 0 makes every threshold zero, so nothing can be flagged
    s = eu.ShellData.synthetic([-math.inf] * 5)
    assert eu.uc_threshold(s, 3).is_zero()
    assert not any(eu.threshold_scan(s).flags)


def test_alpha_regimes():
    a = eu.alpha_select_elliptic(30.0, 0.1)
    assert a.case == "continuum" and a.alpha == pytest.approx(30 ** (4 / 3))
    b = eu.alpha_select_elliptic(1e4, 0.1)
    assert b.case == "intermediate" and b.beta == pytest.approx(4.0)
    c = eu.alpha_select_elliptic(50.0, 1.0, mode="fixed_h", c=2.0)
    assert c.alpha == pytest.approx(2 * 50 * math.log(50))
    with pytest.raises(ValueError):
        eu.alpha_select_elliptic(0.5, 1.0, mode="fixed_h")
    with pytest.raises(ValueError):
        eu.beta_of(10.0, 1.5)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([1.0, 10.0, 93.0, 300.0]), st.sampled_from([1, 2]))
@example(0, 300.0, 2)   # sinh overflows on the padding, where f = 0
def test_static_commutator_closed_form_and_bound(seed, alpha, d):
    cfg = CarlemanConfig(alpha=alpha, R=8.0, h=0.25 if d == 1 else 0.5, d=d)
    f = eu.random_static_field(cfg, np.random.default_rng(seed))
    direct, closed = eu.static_commutator(cfg, f)
    assert closed >= 0
    assert direct == pytest.approx(closed, rel=1e-10)
    lhs, rhs = eu.elliptic_sides(cfg, f)
    assert lhs <= eu.SQRT2 * rhs * (1 + 1e-12)


def test_static_conjugation_identity():
    cfg = CarlemanConfig(alpha=3.0, R=4.0, h=0.5)
    f = eu.random_static_field(cfg, np.random.default_rng(1))
    box = f.box
    x = cfg.h * np.arange(-box.extent, box.extent + 1) / cfg.R + 3.0
    phi = cfg.alpha * x ** 2
    ref = np.exp(phi) * laplacian_array(np.exp(-phi) * f.values, cfg.h)
    S, A = eu.static_ops(cfg, f)
    assert np.allclose(-(S + A), ref, rtol=1e-11, atol=1e-11 * np.abs(ref).max())


def test_static_support_enforced():
    cfg = CarlemanConfig(alpha=3.0, R=4.0, h=0.5)
    box = carleman_box(cfg)
    with pytest.raises(SupportError):
        eu.static_ops(cfg, LatticeField.delta(box, (-box.extent,)))


def test_elliptic_audit_default_config():
    a = eu.alpha_select_elliptic(30.0, 0.1)
    cfg = CarlemanConfig(alpha=a.alpha, R=30.0, h=0.1)
    rep = eu.audit_carleman_elliptic(cfg, 5, seed=0)
    assert rep.passed and rep.C_hat <= eu.SQRT2


def test_elliptic_gap():
    g = eu.landis_elliptic_gap("continuum", 2.0, 1.0, log_prefactor_gap=8.0)
    assert g.verdict == "contradiction" and g.crossing_R == pytest.approx(8.0 ** 0.75)
    assert eu.landis_elliptic_gap("continuum", 0.5, 1.0).verdict == "no contradiction"
    assert eu.landis_elliptic_gap("continuum", 1.0, 1.0).verdict == "boundary"
    fx = eu.landis_elliptic_gap("fixed_h", 3.0, 1.0, h=0.5, log_prefactor_gap=20.0)
    assert eu.elliptic_rate("fixed_h", fx.crossing_R, h=0.5) == pytest.approx(10.0)
    with pytest.raises(ValueError):
        eu.elliptic_rate("intermediate", 10.0)
