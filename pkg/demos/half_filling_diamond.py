"""Six agents' worth of half-filled sites: fluctuating particle number wins.

Prints the best symmetric configuration for the diamond layout, compares it
with the best plan that always carries exactly three agents, and scans the
diamond width to show where the optimum switches.
"""

import numpy as np

from gcot import lp
from gcot.core import DiscreteDensity
from gcot.costs import pairwise_family, riesz
from gcot.halffill import HalfFillInstance, diamond_geometry, solve_half_filling, tcurve

c2 = riesz(1.0)
pts = diamond_geometry(0.7)
res = solve_half_filling(HalfFillInstance(pts, c2))
rho = DiscreteDensity(pts, np.full(6, 0.5))
c3, _ = lp.solve_canonical(rho, 3, pairwise_family(c2))

print(f"best occupied set {res.best}, value {res.value:.10f}")
print(f"exactly three agents: {c3:.10f}")
print(f"the mixture of 2 and 4 agents is cheaper by {c3 - res.value:.4f}")

curve = tcurve(np.linspace(0.1, 0.95, 18))
for t, row, a in zip(curve.t, curve.values, curve.argmin()):
    I = curve.subsets[a]
    print(f"t={t:.3f}  value={row[a]:.6f}  occupied={I}  agents={len(I)} or {6 - len(I)}")
