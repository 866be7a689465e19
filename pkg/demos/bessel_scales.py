"""Why everything is kept in log space.

K_n(x) and I_n(x) leave double range quickly once n or x grows.  This script
prints log K_n and log I_n across the orders used by the lattice weights,
then checks the ratio bounds the convexity argument leans on.
"""

from landis_lab import besselkit

for x in (0.1, 10.0, 1e6):
    print(f"x = {x:g}")
    for n in (0, 5, 20, 200):
        k = besselkit.log_bessel_k(n, x)
        i = besselkit.log_bessel_i(n, x)
        print(f"  n={n:4d}  log K = {k.logmag:14.6f}   log I = {i.logmag:14.6f}")

rep = besselkit.audit_bessel_inequalities(range(-20, 21), [0.1, 1.0, 10.0, 1e3, 1e6], 1e-8)
worst = min(r.min_margin for r in rep.records.values())
print(f"\nratio inequalities hold on the grid: {rep.passed()} (worst margin {worst:.2e})")

# The closed-form order-growth estimate is leading order only; its error
# shrinks like 1/n.
for n in (10, 50, 200):
    exact = besselkit.log_bessel_j(n, 2.0).logmag
    print(f"n={n:3d}  log|J_n(2)| = {exact:10.4f}   leading-order = {besselkit.jota_prediction(n, 2.0):10.4f}")
