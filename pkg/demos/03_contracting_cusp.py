"""The contracting cusp at desk scale.

Starts from the capped cusp with cap radius e^-30 and watches the cap shrink:
v(0, t) tracks 1/(8t), the curvature peak grows like 1/t^2, and a touching
sphere certifies a curvature lower bound of the same order.
"""
import math

import numpy as np

from cuspflow import barriers
from cuspflow.harness import rate_fit
from cuspflow.metrics import CappedCusp, RadialGrid, Sampled, resolved_curvature
from cuspflow.solver import ScaledCusp, run

r0 = math.exp(-30.0)
grid = RadialGrid.sinh(2048, 0.9, r0 / 4)
times = list(np.geomspace(0.03, 0.2, 10))
traj = run(CappedCusp(r0), grid, ScaledCusp(), sample_times=times)

print("    t      v(0,t)   cigar bound   t^2 max K   t^2 witness")
peaks = []
for s in traj:
    K = resolved_curvature(grid.nodes, s.v)
    kmax = float(np.max(K[:-1]))
    peaks.append((s.t, kmax))
    bound = barriers.origin_lower_bound(s.t)[0]
    wit = float("nan")
    if s.t < (barriers.DEFAULT_ALPHA**2 - 1) / 2:
        wit = barriers.curvature_witness(Sampled(grid, s.v), s.t).K0 * s.t**2
    print(f"  {s.t:.4f}  {s.v[0]:8.4f}   {bound:8.4f}    {s.t**2 * kmax:8.4f}    {wit:8.4f}")

p, c, r2 = rate_fit(peaks, (0.03, 0.2))
print(f"\nmax K ~ {c:.3g} t^-{p:.3f}  (R^2 = {r2:.4f})")
print(f"solver: {traj.stats.as_dict()}")
