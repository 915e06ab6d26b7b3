"""Deterministic plans on the line versus the LP on a discretization.

For a uniform density of mass 2 on [0, 2] and the 1/r kernel, both agents
always sit one unit apart, so the cost is exactly 1. The LP on 40 cells
reproduces this up to discretization error.
"""

from gcot.costs import riesz
from gcot.monge1d import GridDensity1D, build_monge_plan, crosscheck_vs_lp, monge_cost

w = riesz(1.0)
for a, b in ((0.0, 2.0), (0.0, 1.5), (0.0, 2.6)):
    rho = GridDensity1D.uniform(a, b)
    plan = build_monge_plan(rho)
    rep = crosscheck_vs_lp(rho, w, cells=40)
    print(f"mass {rho.mass:.2f}: particle numbers {plan.support}, cost {monge_cost(plan, w):.8f}, "
          f"LP {rep.lp_value:.6f} with support {rep.lp_support}")
