import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from landis_lab import carleman as cm
from landis_lab.lattice import LatticeField, laplacian_array

SMALL = cm.CarlemanConfig(alpha=5.0, R=4.0, h=0.25)


@pytest.fixture(scope="module")
def small_field():
    return cm.random_in_support_field(SMALL, np.random.default_rng(0))


def test_smooth_step_and_profile():
    s, s1, s2 = cm.smooth_step(np.array([-1.0, 0.0, 0.5, 1.0, 2.0]))
    assert s.tolist() == [0.0, 0.0, 0.5, 1.0, 1.0]
    prof = cm.PhiProfile()
    assert prof.value(0.5) == 3.0 and prof.value(0.2) == 0.0 and prof.value(0.8) == 0.0
    t, dt = 0.3, 1e-6
    assert float(prof.d1(t)) == pytest.approx(float(prof.value(t + dt) - prof.value(t - dt)) / (2 * dt), rel=1e-6)
    n1, n2 = prof.sup_norms()
    assert n1 == pytest.approx(48.0, rel=1e-6)
    assert n2 == pytest.approx(1889.48, rel=1e-4)
    with pytest.raises(ValueError):
        cm.PhiProfile(rise_start=0.5, rise_end=0.4)


def test_config_defaults_and_validation():
    c = cm.CarlemanConfig(alpha=1.0, R=10.0, h=0.1, d=2)
    assert c.epsilon == pytest.approx(2 * math.sqrt(2) * 0.1 / 10)
    assert c.replace(h=0.05).epsilon == pytest.approx(2 * math.sqrt(2) * 0.05 / 10)
    with pytest.raises(ValueError):
        cm.CarlemanConfig(alpha=1.0, R=0.5, h=0.1)
    with pytest.raises(ValueError):
        cm.CarlemanConfig(alpha=-1.0, R=2.0, h=0.1)


def test_weight_and_support():
    assert cm.carleman_weight(SMALL, 8, 0.5) == pytest.approx(5.0 * (0.5 + 3.0) ** 2)
    box = cm.carleman_box(SMALL)
    mask = cm.support_mask(SMALL, box, 0.0)
    r = np.abs(box.radius()) / SMALL.R
    assert np.array_equal(mask, (r >= 1) & (r <= 4))
    bad = LatticeField.delta(box)
    with pytest.raises(cm.SupportError):
        cm.conjugated_ops(SMALL, bad, 0.0)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.0, 1.0), st.sampled_from([1, 2]))
def test_conjugation_identity(seed, t, d):
    cfg = cm.CarlemanConfig(alpha=2.0, R=3.0, h=0.5, d=d)
    box = cm.carleman_box(cfg)
    f = cm.random_in_support_field(cfg, np.random.default_rng(seed), box)
    v = f(t)
    xs = [cfg.h * j / cfg.R for j in box.indices()]
    xs[0] = xs[0] + float(cfg.profile.value(t))
    phi = cfg.alpha * np.broadcast_to(sum(x ** 2 for x in xs), box.shape)
    ref = np.exp(phi) * (-laplacian_array(np.exp(-phi) * v, cfg.h))
    S, A, pt = cm.conjugated_ops(cfg, LatticeField(box, v), t)
    got = S.values + pt.values + A.values
    assert np.abs(got - ref).max() <= 1e-11 * max(np.abs(ref).max(), 1.0)


def test_pieces_identity_and_fourth_order_agreement(small_field):
    coarse = cm.commutator_pieces(SMALL, small_field, n_time=400)
    fine = cm.commutator_pieces(SMALL, small_field, n_time=800)
    # the two reduced cross pieces are literally the same sum
    assert fine.ratio_iii_ii() == pytest.approx(1.0, abs=1e-12)
    ops = fine.operator_pieces
    assert ops["II"] == pytest.approx(ops["II_reduced"], rel=1e-10)
    assert ops["III"] == pytest.approx(fine.III, rel=1e-3)
    assert ops["IV"] == pytest.approx(fine.IV, rel=1e-10)
    ratio = coarse.agreement() / fine.agreement()
    assert 12.0 < ratio < 20.0
    assert fine.refinement["agreement_extrapolated"] <= 1e-6


def test_time_grid_and_time_field():
    with pytest.raises(ValueError):
        cm.time_grid(4)
    box = cm.carleman_box(SMALL)
    tf = cm.TimeField(box, lambda t: np.zeros(3))
    with pytest.raises(ValueError):
        tf(0.5)


def test_conditions_reference_pairs_valid():
    assert cm.alpha_constants(1) == (8.0, 4.0)
    for R, h in cm.REFERENCE_CTC + cm.REFERENCE_DISCRETE:
        rep = cm.check_carleman_conditions(cm.CarlemanConfig(alpha=cm.alpha_select(R, h), R=R, h=h))
        assert rep.valid and rep.verdict == "valid"


def test_condition_clauses():
    assert cm.check_carleman_conditions(cm.CarlemanConfig(alpha=1.0, R=10, h=0.05)).verdict == "violated"
    gap = cm.check_carleman_conditions(cm.CarlemanConfig(alpha=30.0, R=10, h=0.1))
    assert gap.clause == "gap" and gap.verdict == "no claim" and not gap.valid
    with pytest.raises(cm.ConditionViolation):
        cm.audit_carleman_inequality(cm.CarlemanConfig(alpha=30.0, R=10, h=0.1), 1, 0)


def test_empirical_carleman_constant_is_finite_and_seeded():
    cfg = cm.CarlemanConfig(alpha=cm.alpha_select(10.0, 0.1), R=10.0, h=0.1)
    a = cm.audit_carleman_inequality(cfg, 2, seed=4, n_time=64)
    b = cm.audit_carleman_inequality(cfg, 2, seed=4, n_time=64)
    assert a.ratios == b.ratios
    assert all(math.isfinite(r) and r > 0 for r in a.ratios)
    assert a.to_dict()["label"] == "empirical"


def test_localized_lower_bound_log():
    cfg = cm.CarlemanConfig(alpha=800.0, R=10.0, h=0.1)
    expect = (-4 * math.log(0.1) + math.log(math.sinh(2 * 800 * 0.01 / 100))
              + 2 * math.log(math.sinh(2 * 800 * 0.1 / 10)) - 14 * 800)
    assert cm.localized_lower_bound_log(cfg) == pytest.approx(expect, rel=1e-12)


@pytest.mark.parametrize("R", [0.5, 1.0, 1.5])
def test_upper_bound_close_to_continuum_band(R):
    rep = cm.upper_bound_ctc(4.0, R, 0.02, require_fine_scale=False)
    assert -1.1 <= rep.normalized <= -0.9
    assert rep.predicted_exponent == pytest.approx(-R ** 2 / 4.0)


def test_upper_bound_hypotheses():
    with pytest.raises(cm.HypothesisViolation):
        cm.upper_bound_ctc(4.0, 1.0, 0.02)            # R/h < M
    with pytest.raises(cm.HypothesisViolation):
        cm.upper_bound_ctc(4.0, 150.0, 0.02, require_fine_scale=False)   # Rh >= gamma/2
    with pytest.raises(cm.HypothesisViolation):
        cm.upper_bound_ctc(1.0, 1.0, 0.5, require_fine_scale=False)      # gamma/h^2 < M
    with pytest.raises(cm.HypothesisViolation):
        cm.upper_bound_discrete(1 / math.e, 40.0, 0.1)


def test_upper_bound_exponent_is_dimension_free():
    # per-axis weights peak on an axis, so the sup over the shell decays like -R^2/gamma in every d
    one = cm.upper_bound_ctc(4.0, 1.0, 0.02, d=1, require_fine_scale=False).normalized
    two = cm.upper_bound_ctc(4.0, 1.0, 0.02, d=2, require_fine_scale=False).normalized
    assert two == pytest.approx(one, rel=0.02)


@pytest.mark.parametrize("h", [0.08, 0.05, 0.02])
def test_upper_bound_discrete_matches_asymptotics(h):
    rep = cm.upper_bound_discrete(1 / math.e, 4.0 / h, h)
    assert rep.relative_gap <= 0.1


def test_lower_bound_fit_close_to_continuum():
    fit = cm.lower_bound_audit(np.arange(5.0, 40.01, 2.5), 0.02)
    assert 1.9 <= fit.ctc["exponent"] <= 2.1
    assert fit.ctc["r2"] >= 0.99 and fit.ctc["exponent_fit_r2"] >= 0.99
    assert fit.ctc["c_lower"] > 0


def test_lower_bound_fit_synthetic_recovery():
    R = np.linspace(5, 40, 12)
    fit = cm.fit_lower_bound(R, -0.3 * R ** 2 + 0.5 * R - 2.0, 0.02)
    assert fit.ctc["exponent"] == pytest.approx(2.0, abs=1e-3)
    h = 1.0
    Rd = np.arange(4.0, 40.0, 2.0)
    logs = -1.7 * Rd / h * np.log(Rd * h) + 0.2 * Rd / h + 1.0
    assert cm.fit_lower_bound(Rd, logs, h).discrete["slope"] == pytest.approx(-1.7, rel=1e-8)


def test_lower_bound_errors():
    with pytest.raises(ValueError):
        cm.lower_bound_audit([], 0.02)
    with pytest.raises(ValueError):
        cm.lower_bound_audit([5.0, 10.0], 0.02, d=2)
    with pytest.raises(ValueError):
        cm.fit_lower_bound([5.0, 6.0, 7.0, 8.0], [0.0, -1.0, -math.inf, -3.0], 0.02)


def test_landis_gap_verdicts():
    g = cm.landis_gap(0.25, 2.0)
    assert g.verdict == "contradiction"
    assert g.gamma_star == pytest.approx(0.5)
    assert cm.landis_gap(0.5, 1.0, log_prefactor_gap=4.0).crossing_R == pytest.approx(2.0)
    assert cm.landis_gap(2.0, 1.0).verdict == "no contradiction"
    assert cm.landis_gap(1.0, 1.0).verdict == "boundary"
    with pytest.raises(ValueError):
        cm.landis_gap(1.0, 0.0)
