import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from landis_lab import convexity as cv
from landis_lab import heat_sim as hs
from landis_lab.lattice import LatticeBox
from landis_lab.logscalar import LogScalar
from tests import oracles

seeds = st.integers(0, 2 ** 32 - 1)


def test_weight_spec_validation():
    with pytest.raises(ValueError):
        cv.WeightSpec("gaussian", 0.5, gamma=1.0)
    with pytest.raises(ValueError):
        cv.WeightSpec("purely_discrete", 0.5)
    with pytest.raises(ValueError):
        cv.WeightSpec("close_to_continuum", 0.5, gamma=1.0, delta=0.5)
    with pytest.raises(ValueError):
        cv.WeightSpec("delta_interp", 0.5, gamma=1.0, delta=0.0)
    with pytest.raises(ValueError):
        cv.WeightSpec("delta_interp", 0.5, gamma=1.0, time_dependent=True)


def test_weight_axis_against_oracle():
    spec = cv.WeightSpec("close_to_continuum", 0.5, gamma=2.0, normalize="none")
    ax = cv.log_weight_axis(spec, 30)
    for m in (0, 7, 30):
        assert ax[m] == pytest.approx(oracles.log_k(m, 8.0), rel=1e-12)
    disc = cv.WeightSpec("purely_discrete", 0.5, mu=0.4, normalize="none")
    x = 2.0 / (math.e * 0.25)
    assert cv.log_weight_axis(disc, 5)[5] == pytest.approx(oracles.log_k(2.0, x), rel=1e-12)


def test_weights_never_overflow_at_tiny_mesh():
    spec = cv.WeightSpec("close_to_continuum", 1e-3, gamma=4.0)
    ax = cv.log_weight_axis(spec, 2000)
    assert np.all(np.isfinite(ax)) and np.all(np.diff(ax) > 0)
    assert cv.weight_at(spec, (3, -4)).logmag == pytest.approx(ax[3] + ax[4])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 2), st.sampled_from([1.0, 4.0]), st.sampled_from([0.5, 0.25, 0.1]),
       st.floats(0.05, 1.0), seeds)
def test_direct_commutator_matches_closed_form(d, gamma, h, delta, seed):
    box = LatticeBox(d, h, 8 if d == 2 else 20)
    spec = cv.WeightSpec("delta_interp", h, gamma=gamma, delta=delta)
    f = cv.random_interior_field(box, np.random.default_rng(seed))
    assert cv.commutator_form(f, spec)["relative_gap"] < 1e-10


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([1.0, 4.0]), st.sampled_from([0.5, 0.25, 0.1]), seeds)
def test_commutator_positive_for_full_weight(gamma, h, seed):
    box = LatticeBox(1, h, 20)
    spec = cv.WeightSpec("delta_interp", h, gamma=gamma)
    f = cv.random_interior_field(box, np.random.default_rng(seed))
    assert cv.commutator_direct(f, spec) >= -1e-10 * cv.commutator_scale(f)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 1.0), seeds)
def test_commutator_lower_bound_for_partial_weight(delta, seed):
    box = LatticeBox(1, 0.25, 20)
    spec = cv.WeightSpec("delta_interp", 0.25, gamma=1.0, delta=delta)
    f = cv.random_interior_field(box, np.random.default_rng(seed))
    assert cv.commutator_direct(f, spec) >= cv.commutator_lower_bound(spec, f) * (1 + 1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(-30, 30), st.floats(1e-2, 1e5), st.floats(0.0, 1.0))
def test_lambda_delta_lower_bound(j, x, delta):
    assert cv.lambda_delta(j, x, delta) >= cv.lambda_lower_bound(x)


# Lambda_1 decays like 2/x^3 while its absolute rounding error is about 1e-15,
# so the sign is resolvable only up to x of order 1e4.
@settings(max_examples=100, deadline=None)
@given(st.integers(-30, 30), st.floats(1e-2, 1e4))
def test_lambda_one_positive(j, x):
    assert cv.lambda_delta(j, x, 1.0) > 0.0


def _lambda_oracle(j, x, delta):
    import mpmath as mp
    with mp.workdps(40):
        D = lambda m: mp.log(mp.besselk(m + 1, x) / mp.besselk(m, x))
        a, b = 2 * D(j), -2 * D(j - 1)
        c, e = D(j) - D(j + 1), D(j - 2) - D(j - 1)
        return float(2 * sum(mp.sinh(delta * v) for v in (a, b, c, e)))


@pytest.mark.parametrize("j,x,delta", [(0, 0.5, 1.0), (3, 10.0, 0.4), (-7, 100.0, 1.0), (12, 1e3, 0.8)])
def test_lambda_delta_against_oracle(j, x, delta):
    assert cv.lambda_delta(j, x, delta) == pytest.approx(_lambda_oracle(j, x, delta), rel=1e-6)


def test_operator_transpose_and_cross_terms():
    box = LatticeBox(2, 0.25, 10)
    rng = np.random.default_rng(1)
    spec = cv.WeightSpec("delta_interp", 0.25, gamma=1.0, delta=0.7)
    f, g = cv.random_interior_field(box, rng), cv.random_interior_field(box, rng)
    M, _ = cv.axis_ops(f, spec, 0)
    _, N = cv.axis_ops(g, spec, 0)
    assert np.sum(M * g.values) == pytest.approx(np.sum(f.values * N), abs=1e-10)
    # a tensor weight makes mixed-axis commutators vanish
    assert abs(cv.cross_commutator(f, spec, 0, 1)) < 1e-12 * cv.commutator_scale(f)


def test_example_log_convexity():
    for h in (0.5, 0.25, 0.1):
        box = LatticeBox(1, h, int(round(30 / h)))
        ser = hs.example_series(box, np.linspace(0, 1, 33))
        spec = cv.WeightSpec("close_to_continuum", h, gamma=4.0)
        rep = cv.audit_logconvexity(cv.weighted_energy(ser, spec), 0.0)
        assert rep.N_hat <= 1e-6 and not rep.degenerate


def test_log_convexity_detects_a_bump():
    spec = cv.WeightSpec("close_to_continuum", 0.5, gamma=4.0)
    t = np.linspace(0, 1, 5)
    vals = [LogScalar.from_log(v) for v in (0.0, 0.0, 3.0, 0.0, 0.0)]
    rep = cv.audit_logconvexity(cv.WeightedEnergy(t, vals, spec), 2.0)
    assert rep.N_hat == pytest.approx(1.5) and rep.argmax == 0.5


def test_monotone_energy_along_heat_flow():
    box = LatticeBox(1, 0.25, 32)
    prob = hs.random_bounded_problem(box, np.random.default_rng(2), time_dependent=True,
                                     t_grid=np.linspace(0, 1, 33))
    traj = hs.solve(prob)
    spec = cv.WeightSpec("close_to_continuum", 0.25, gamma=2.0, time_dependent=True)
    assert cv.audit_monotone_energy(traj, spec).passed
    with pytest.raises(ValueError):
        cv.audit_monotone_energy(traj, spec.replace(time_dependent=False))


def test_time_derivative_of_weight():
    spec = cv.WeightSpec("close_to_continuum", 0.5, gamma=2.0, time_dependent=True, normalize="none")
    t, dt = 0.3, 1e-6
    num = (cv._log_omega_axis(spec, 6, t + dt) - cv._log_omega_axis(spec, 6, t - dt)) / (2 * dt)
    assert np.allclose(cv._dt_log_omega_axis(spec, 6, t), num, rtol=1e-6)


@pytest.mark.parametrize("gamma,h,t,R", [(4.0, 0.25, 0.3, 10), (1.0, 0.5, 0.0, 6), (2.0, 0.1, 1.0, 30)])
def test_truncated_weight_error_is_nonpositive(gamma, h, t, R):
    assert np.all(cv.truncated_weight_errors(gamma, h, t, R) <= 0.0)
