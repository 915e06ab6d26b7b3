"""Cool the entropic problem on the diamond and watch it approach the LP value.

The gap to the unregularized optimum shrinks linearly in T, with slope equal
to the relative entropy of the LP optimum against the Poisson state.
"""

import math

import numpy as np

from gcot import entropic, lp
from gcot.core import DiscreteDensity
from gcot.costs import pairwise_family, riesz
from gcot.halffill import diamond_geometry

rho = DiscreteDensity(diamond_geometry(0.7), np.full(6, 0.5))
fam = pairwise_family(riesz(1.0))
exact = lp.solve(rho, 6, fam).value
table = entropic.temperature_sweep(rho, 6, fam, np.logspace(-3, 1, 9))

print(f"LP value {exact:.8f}")
print(f"{'T':>8} {'F_T':>12} {'F_T - LP':>11} {'(F_T - LP)/T':>13}")
for row in table.rows:
    print(f"{row.T:8.4f} {row.F:12.8f} {row.F - exact:11.3e} {(row.F - exact) / row.T:13.4f}")
print(f"slope predicted from the LP optimum: {3 + 2 * math.log(2):.4f}")
print(f"nondecreasing: {table.nondecreasing}, concave: {table.concave}")
