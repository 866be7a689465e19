"""A solution that decays as fast as a bounded potential allows, and one that decays faster.

J_n(2) solves a one-dimensional discrete Schroedinger equation with a
bounded potential and decays like (1/n)^n.  A pure 4^-N shell sequence
drops below the product threshold from the start and gets flagged.
"""

from landis_lab import elliptic_uc as eu

prob = eu.bessel_testbed(201, 2.0)
print(f"testbed residual (relative to sup): {eu.residual_report(prob).relative_to_sup:.2e}")
shells = eu.shell_extract(prob)
rec = eu.uc_recursion_audit(shells)
print(f"shell recursion holds for all audited N: {rec.passed}")
fit = eu.jota_slope_fit(2.0, 50, 200)
print(f"fitted slope of log M_N against N log N: {fit.a:.4f}")

bessel = eu.threshold_scan(shells)
geo = eu.threshold_scan(eu.ShellData.geometric(4.0, 40))
print(f"J testbed flagged shells: {sum(bessel.flags)}")
print(f"4^-N sequence flagged from N0 = {geo.N0}")
