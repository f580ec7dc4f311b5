"""The implicit solver against two exact solutions.

A cigar soliton keeps its shape while its scale parameter grows like
exp(4t / eps); a round sphere shrinks homothetically.  Errors should fall by
a factor of about four per grid doubling.
"""
import math

import numpy as np

from cuspflow import barriers
from cuspflow.metrics import RadialGrid, Sphere, eval_v
from cuspflow.solver import ExactCigar, ShrinkingSphere, convergence_study

r0 = math.exp(-2.0)
tan = barriers.cigar_tangency(r0)
sizes = (256, 512, 1024)


def cigar_exact(r, t):
    return barriers.cigar_flow(r0, r, t)


def sphere_exact(r, t):
    return eval_v(Sphere(1.0, 1.0), r) + 0.5 * math.log1p(-2.0 * t)


cases = [
    ("cigar", tan.cigar, ExactCigar(r0), cigar_exact, math.sqrt(tan.delta)),
    ("sphere", Sphere(1.0, 1.0), ShrinkingSphere(1.0, 1.0), sphere_exact, 0.5),
]
for name, prof, bc, exact, scale in cases:
    order, ns, errs = convergence_study(prof, bc, 0.02, sizes, exact,
                                        lambda n: RadialGrid.sinh(n, 0.9, scale), dt_coeff=5.0)
    print(f"{name}: " + "  ".join(f"N={n}: {e:.3e}" for n, e in zip(ns, errs)))
    print(f"  observed order {order:.3f}; error ratios {np.round(np.array(errs[:-1]) / errs[1:], 2)}")
