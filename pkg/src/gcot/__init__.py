"""Grand-canonical optimal transport on finite atomic densities."""

from .core import DiscreteDensity, GCPlan, PlanError, plan_density, validate_plan
from .costs import PairwiseCost, pairwise_family, parse_cost, parse_pair_cost, riesz
from .lp import InfeasibleError, NonConvergence, SizeCapExceeded, solve

__all__ = [
    "DiscreteDensity", "GCPlan", "PlanError", "plan_density", "validate_plan",
    "PairwiseCost", "pairwise_family", "parse_cost", "parse_pair_cost", "riesz",
    "InfeasibleError", "NonConvergence", "SizeCapExceeded", "solve",
]
__version__ = "0.1.0"
