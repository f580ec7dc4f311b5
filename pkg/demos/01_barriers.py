"""Barriers under the hyperbolic cusp, without solving any PDE.

Walks through the cigars that touch the cusp from below, the cusp as their
envelope, the best cigar lower bound for v(0, t), and the touching-sphere
family used to certify curvature lower bounds.
"""
import math

from cuspflow import barriers

print("Cigars tangent to the cusp h = 1 / (r log r)^2")
for L in (2.0, 5.0, 20.0):
    r0 = math.exp(-L)
    tan = barriers.cigar_tangency(r0)
    excess = barriers.verify_cigar_touch(r0)
    print(f"  r0 = e^-{L:<4g} eps = {tan.eps:.6g}  delta = {tan.delta:.6g}  max(u/h - 1) = {excess:.2e}")

print("\nThe cusp is the supremum of its tangent cigars (inside r < 1/e)")
for r in (1e-6, 1e-3, 0.1, 0.3):
    sup, r0 = barriers.envelope_sup(r)
    print(f"  r = {r:<7g} sup u/h = {sup:.12f}  attained at r0 = {r0:.6g}")

print("\nFlowing the cigars gives v(0, t) >= 1/(8t) + (1 + log 4t)/2")
for t in (0.02, 0.05, 0.1, 0.2):
    v, r0 = barriers.origin_lower_bound(t)
    vn, rn = barriers.origin_lower_bound_numeric(t)
    print(f"  t = {t:<5g} closed form {v:.10f} (r0 = {r0:.4g})   optimiser {vn:.10f}")

alpha = barriers.DEFAULT_ALPHA
print(f"\nSpheres tangent to alpha^2 h from below, alpha = {alpha}")
print("  log beta      r0            K0       lower bound")
for log_beta in (2.0, 5.0, 10.0, 30.0):
    s = barriers.sphere_tangency(alpha, math.exp(log_beta))
    lb = barriers.sphere_K0_lower(alpha, s.beta)
    print(f"  {log_beta:<8g} {s.r0:12.6g} {s.K0:12.6g} {lb:12.6g}")
print("  taller spheres are more curved: K0 grows like (log beta)^2 / alpha^2")
