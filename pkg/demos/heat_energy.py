"""A random bounded potential, one heat flow, and the two a-priori estimates.

The energy inequality is tight at t = 0 and opens up afterwards; the
Caccioppoli report gives the smallest constant in front of the bulk term
that makes the ring estimate hold for this trajectory.
"""

import numpy as np

from landis_lab import heat_sim
from landis_lab.lattice import LatticeBox, LatticeField

box = LatticeBox(1, 0.25, 48)
prob = heat_sim.random_bounded_problem(box, np.random.default_rng(3), 3.0,
                                       t_grid=np.linspace(0.0, 1.0, 129))
traj = heat_sim.solve(prob)
energy = heat_sim.audit_energy(traj)
cacc = heat_sim.audit_caccioppoli(traj, 5.0)
print(f"energy: min slack {energy.min_slack:.3e} at t = {energy.argmin:.3f}")
print(f"Caccioppoli at R=5: gradient {cacc.gradient_term:.4e}, "
      f"initial {cacc.initial_term:.4e}, bulk {cacc.bulk_term:.4e}, C2 = {cacc.C2:.4f}")

# Free flow from a point mass against the Bessel closed form.
box2 = LatticeBox(2, 0.25, 64)
free = heat_sim.HeatProblem(box2, LatticeField.delta(box2), None, 0.0, np.linspace(0, 1, 5))
u = heat_sim.solve(free).snapshots[-1]
ref = heat_sim.free_kernel_solution(box2, 1.0)
print(f"d=2 kernel: mass {heat_sim.total_mass(u):.15f}, "
      f"max gap {np.abs(u.values - ref.values).max():.2e}")

print("\nscaling limit towards the Gaussian-type profile at x = t = 1:")
for row in heat_sim.gaussian_limit(1.0, 1.0, [1.0, 0.25, 0.0625, 0.015625]):
    print(f"  h = {row.h:<9g} error {row.error:.3e}")
