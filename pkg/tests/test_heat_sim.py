import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from landis_lab import heat_sim as hs
from landis_lab.lattice import LatticeBox, LatticeField, discrete_laplacian
from tests import oracles


def _kernel_problem(d, h, extent=None, samples=5):
    box = LatticeBox(d, h, extent or int(math.ceil(16.0 / h)))
    return hs.HeatProblem(box, LatticeField.delta(box), None, 0.0, np.linspace(0.0, 1.0, samples))


def test_problem_validation():
    box = LatticeBox(1, 1.0, 8)
    u0 = LatticeField.delta(box)
    with pytest.raises(ValueError):
        hs.HeatProblem(box, u0, np.full(box.shape, 2.0), 1.0)
    with pytest.raises(ValueError):
        hs.HeatProblem(box, u0, None, 0.0, np.array([0.0, 0.5]))
    with pytest.raises(ValueError):
        hs.HeatProblem(LatticeBox(1, 0.5, 8), u0)


def test_free_kernel_matches_bessel_series():
    box = LatticeBox(1, 0.5, 20)
    k = hs.free_kernel_log(box, 0.7)
    x = 2 * 0.7 / 0.25
    for j in (0, 3, 11):
        assert k.logmags[box.site((j,))] == pytest.approx(oracles.log_i(j, x) - x, rel=1e-12)


@pytest.mark.parametrize("d,h", [(1, 1.0), (1, 0.25), (2, 1.0), (2, 0.25)])
def test_mass_conservation_and_kernel_agreement(d, h):
    prob = _kernel_problem(d, h)
    u = hs.solve(prob).snapshots[-1]
    assert abs(hs.total_mass(u) - 1.0) < 1e-10
    ref = hs.free_kernel_solution(prob.box, 1.0)
    assert np.abs(u.values - ref.values).max() / np.abs(ref.values).max() <= 1e-8


def test_integrators_agree_on_static_potential():
    box = LatticeBox(1, 0.25, 40)
    prob = hs.random_bounded_problem(box, np.random.default_rng(3), t_grid=np.linspace(0, 1, 9))
    a = hs.solve(prob, "rk4").snapshots[-1].values
    b = hs.solve(prob, "exponential").snapshots[-1].values
    assert np.abs(a - b).max() <= 1e-8 * np.abs(b).max()
    assert hs.self_convergence(prob) < 1e-8


def test_exponential_rejects_time_dependent_potential():
    box = LatticeBox(1, 0.5, 10)
    prob = hs.random_bounded_problem(box, np.random.default_rng(0), time_dependent=True)
    with pytest.raises(ValueError):
        hs.solve(prob, "exponential")
    with pytest.raises(ValueError):
        hs.solve(prob, "euler")


def test_guard_catches_blowup():
    box = LatticeBox(1, 0.5, 10)
    prob = hs.HeatProblem(box, LatticeField.delta(box), np.full(box.shape, 5.0), 5.0,
                          np.linspace(0, 1, 5))
    object.__setattr__(prob, "v_sup", 0.0)
    with pytest.raises(hs.IntegrationError):
        hs.solve(prob)


def test_closed_form_example_solves_the_equation():
    box = LatticeBox(1, 0.5, 30)
    dt = 1e-5
    t = 0.4
    lin = lambda s: hs.example_solution(box, s).to_linear()[0].values
    dudt = (lin(t + dt) - lin(t - dt)) / (2 * dt)
    lap = discrete_laplacian(LatticeField(box, lin(t))).values
    inner = slice(1, -1)
    assert np.abs(dudt[inner] - lap[inner]).max() <= 1e-6 * np.abs(lap).max()


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.booleans())
def test_energy_and_caccioppoli_on_random_problems(seed, td):
    box = LatticeBox(1, 0.25, 32)
    prob = hs.random_bounded_problem(box, np.random.default_rng(seed), time_dependent=td,
                                     t_grid=np.linspace(0, 1, 33))
    traj = hs.solve(prob)
    rep = hs.audit_energy(traj)
    assert rep.passed and rep.min_slack >= -1e-6
    ca = hs.audit_caccioppoli(traj, 4.0)
    assert ca.finite and ca.C2 >= 0.0


def test_energy_quadratures_agree():
    box = LatticeBox(1, 0.25, 32)
    gaps = []
    for n in (65, 257):
        prob = hs.random_bounded_problem(box, np.random.default_rng(11), v_max=0.0,
                                         t_grid=np.linspace(0, 1, n))
        traj = hs.solve(prob)
        integ = hs.audit_energy(traj, quadrature="integrator")
        # with V = 0 the energy relation is an identity, up to the stage quadrature error
        assert abs(integ.min_slack) < 1e-6
        gaps.append(integ.details["trapezoid_gap"])
    # snapshot trapezoid converges to the integrator-side value at second order
    assert gaps[1] < gaps[0] / 8.0


def test_energy_audit_detects_a_wrong_bound():
    box = LatticeBox(1, 0.25, 32)
    prob = hs.random_bounded_problem(box, np.random.default_rng(5), v_max=3.0)
    prob = hs.HeatProblem(box, prob.initial, np.abs(prob.potential), prob.v_sup, prob.t_grid)
    traj = hs.solve(prob)
    object.__setattr__(traj.problem, "v_sup", 0.0)
    assert not hs.audit_energy(traj).passed


def test_gaussian_limit_values():
    rows = hs.gaussian_limit(1.0, 1.0, [1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625])
    assert rows[-1].limit == pytest.approx(0.21969564473386122, rel=1e-14)
    assert hs.gaussian_limit_passes(rows)
    with pytest.raises(ValueError):
        hs.gaussian_limit(1.0, 1.0, [0.3])


def test_trajectory_export(tmp_path):
    prob = _kernel_problem(1, 1.0, extent=6, samples=3)
    hs.solve(prob).export(tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == [
        "manifest.json", "snapshot_0000.csv", "snapshot_0001.csv", "snapshot_0002.csv"]
