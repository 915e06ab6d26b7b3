"""Truncated grand-canonical transport as a finite linear program.

Variables are the finite-cost occupation vectors with at most ``nmax``
particles. There is one row per atom (the induced density must equal
``rho``) and one normalization row, so the basis stays tiny while the
column count grows combinatorially.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (DiscreteDensity, GCPlan, Occupation, count_occupations, iter_occupations,
                   plan_density, plan_mass_distribution)
from .costs import BoundCost, CostFamily
from .simplex import InfeasibleLP, IterationLimit, UnboundedLP, solve_standard_form

DEFAULT_SIZE_CAP = 5_000_000
EXACT_SIZE_CAP = 2000
WEIGHT_FLOOR = 1e-13


class InfeasibleError(RuntimeError):
    """The density cannot be represented at this truncation.

    ``row`` is the offending atom index, or ``"mass"`` for the particle-number bound.
    """

    def __init__(self, message: str, row=None):
        super().__init__(message)
        self.row = row


class SizeCapExceeded(RuntimeError):
    pass


class NonConvergence(RuntimeError):
    pass


def _bind(cost, rho: DiscreteDensity) -> BoundCost:
    if isinstance(cost, BoundCost):
        if cost.m != rho.m:
            raise ValueError("bound cost and density have different supports")
        return cost
    if isinstance(cost, CostFamily):
        return cost.bind(rho.points)
    raise TypeError("cost must be a CostFamily or BoundCost")


@dataclass(frozen=True)
class LPInstance:
    rho: DiscreteDensity
    nmax: int
    occupations: list[Occupation]
    occ_array: np.ndarray
    costs: np.ndarray
    c0: float
    canonical: int | None = None

    @property
    def n_variables(self) -> int:
        return len(self.occupations)


def _caps(rho: DiscreteDensity, bound: BoundCost, nmax: int) -> list[int]:
    return [0 if mass == 0 else cap for mass, cap in zip(rho.masses, bound.site_caps(nmax))]


def build_instance(rho: DiscreteDensity, nmax: int, cost, cap: int = DEFAULT_SIZE_CAP,
                   particles: int | None = None) -> LPInstance:
    """Enumerate variables and their costs.

    With ``particles`` set, only occupations with exactly that many particles
    are kept (the fixed-particle-number problem).
    """
    if nmax < 0:
        raise ValueError("nmax must be nonnegative")
    bound = _bind(cost, rho)
    caps = _caps(rho, bound, nmax)
    count = count_occupations(rho.m, nmax, caps)
    if count > cap:
        raise SizeCapExceeded(f"{count} occupations exceed the cap of {cap}")
    if particles is None:
        occs = list(iter_occupations(rho.m, nmax, caps))
    else:
        occs = [o for o in iter_occupations(rho.m, nmax, caps) if sum(o) == particles]
    arr = np.array(occs, dtype=np.int64).reshape(len(occs), rho.m)
    costs = bound.batch(arr)
    keep = np.isfinite(costs)
    occs = [o for o, k in zip(occs, keep) if k]
    return LPInstance(rho, nmax, occs, arr[keep], costs[keep], bound.c0, particles)


def enumerate_configurations(rho: DiscreteDensity, nmax: int, cost,
                             cap: int = DEFAULT_SIZE_CAP) -> list[Occupation]:
    """Finite-cost occupation vectors with at most ``nmax`` particles.

    Atoms of zero mass are never occupied, and atoms whose self-interaction is
    infinite hold at most one particle.
    """
    return build_instance(rho, nmax, cost, cap).occupations


def _precheck(rho: DiscreteDensity, inst: LPInstance, bound_caps: list[int] | None = None):
    total = rho.total_mass
    if inst.canonical is None and total > inst.nmax + 1e-12:
        raise InfeasibleError(f"mass {total:g} exceeds nmax={inst.nmax}", row="mass")
    if inst.canonical is not None and abs(total - inst.canonical) > 1e-9:
        raise InfeasibleError(f"mass {total:g} differs from N={inst.canonical}", row="mass")
    if bound_caps is not None:
        for i, (mass, c) in enumerate(zip(rho.masses, bound_caps)):
            if mass > c + 1e-12:
                raise InfeasibleError(f"atom {i} has mass {mass:g} above its occupancy cap {c}", row=i)


@dataclass(frozen=True)
class DualCertificate:
    """Potentials ``(beta, phi)`` for the dual problem.

    ``gap`` is primal value minus ``beta + phi . rho``; ``max_violation`` is the
    largest ``beta + o . phi - c(o)`` over enumerated occupations, and
    ``max_slackness`` the largest ``|beta + o . phi - c(o)|`` over the primal support.
    """

    beta: float
    phi: np.ndarray
    gap: float
    primal: float
    dual: float
    max_violation: float
    max_slackness: float

    def is_valid(self, tol: float = 1e-9, gap_tol: float = 1e-8) -> bool:
        return self.max_violation <= tol and abs(self.gap) <= gap_tol and self.max_slackness <= gap_tol


@dataclass(frozen=True)
class LPSolution:
    value: float
    plan: GCPlan
    certificate: DualCertificate
    n_variables: int
    iterations: int
    exact_value: str | None = None

    @property
    def support(self) -> list[int]:
        return self.plan.support()


def _solve_instance(inst: LPInstance, exact: bool, exact_cap: int) -> LPSolution:
    rho = inst.rho
    m = rho.m
    if exact and inst.n_variables > exact_cap:
        raise SizeCapExceeded(f"exact mode allows at most {exact_cap} variables, got {inst.n_variables}")
    if inst.n_variables == 0:
        raise InfeasibleError("no finite-cost configuration is available", row="mass")
    A = np.vstack([inst.occ_array.T.astype(float), np.ones((1, inst.n_variables))])
    b = np.concatenate([rho.masses, [1.0]])
    try:
        res = solve_standard_form(A, b, inst.costs, exact=exact)
    except InfeasibleLP as exc:
        row = exc.row if exc.row is not None and exc.row < m else "mass"
        raise InfeasibleError("density is not reachable at this truncation", row=row) from exc
    except UnboundedLP as exc:  # pragma: no cover - impossible with a normalization row
        raise AssertionError("bounded feasible set produced an unbounded LP") from exc
    except IterationLimit as exc:
        raise NonConvergence(str(exc)) from exc
    weights = {o: float(x) for o, x in zip(inst.occupations, res.x) if x > WEIGHT_FLOOR}
    plan = GCPlan(weights, nmax=inst.nmax, m=m)
    phi, beta = res.y[:m], float(res.y[m])
    slack = beta + inst.occ_array @ phi - inst.costs
    on = res.x > WEIGHT_FLOOR
    dual = beta + float(phi @ rho.masses)
    cert = DualCertificate(beta, phi, res.value - dual, res.value, dual,
                           float(max(np.max(slack, initial=-math.inf), beta - inst.c0
                                     if inst.canonical is None else -math.inf)),
                           float(np.max(np.abs(slack[on]), initial=0.0)))
    exact_value = str(res.exact_value) if res.exact_value is not None else None
    return LPSolution(res.value, plan, cert, inst.n_variables, res.iterations, exact_value)


def solve(rho: DiscreteDensity, nmax: int, cost, exact: bool = False,
          cap: int = DEFAULT_SIZE_CAP, exact_cap: int = EXACT_SIZE_CAP) -> LPSolution:
    """Solve the problem truncated at ``nmax`` particles, returning plan and dual certificate."""
    bound = _bind(cost, rho)
    inst = build_instance(rho, nmax, bound, cap)
    _precheck(rho, inst, _caps(rho, bound, nmax))
    return _solve_instance(inst, exact, exact_cap)


def solve_primal(rho: DiscreteDensity, nmax: int, cost, **kw) -> tuple[float, GCPlan]:
    sol = solve(rho, nmax, cost, **kw)
    return sol.value, sol.plan


def solve_dual(rho: DiscreteDensity, nmax: int, cost, **kw) -> DualCertificate:
    return solve(rho, nmax, cost, **kw).certificate


def solve_canonical_full(rho: DiscreteDensity, N: int, cost, exact: bool = False,
                         cap: int = DEFAULT_SIZE_CAP, exact_cap: int = EXACT_SIZE_CAP) -> LPSolution:
    bound = _bind(cost, rho)
    inst = build_instance(rho, N, bound, cap, particles=N)
    _precheck(rho, inst, _caps(rho, bound, N))
    return _solve_instance(inst, exact, exact_cap)


def solve_canonical(rho: DiscreteDensity, N: int, cost, **kw) -> tuple[float, GCPlan]:
    """Optimal plan among those carrying exactly ``N`` particles (needs ``rho(Omega) = N``)."""
    sol = solve_canonical_full(rho, N, cost, **kw)
    return sol.value, sol.plan


@dataclass(frozen=True)
class SweepResult:
    values: list[tuple[int, float]]
    nonincreasing: bool
    stabilized_at: int | None


def truncation_sweep(rho: DiscreteDensity, cost, n_from: int, n_to: int,
                     tol: float = 1e-9) -> SweepResult:
    if n_from < math.ceil(rho.total_mass - 1e-12):
        raise ValueError("n_from must be at least the total mass")
    bound = _bind(cost, rho)
    vals = [(N, solve(rho, N, bound).value) for N in range(n_from, n_to + 1)]
    mono = all(b[1] <= a[1] + tol for a, b in zip(vals, vals[1:]))
    stab = next((b[0] for a, b in zip(vals, vals[1:]) if abs(a[1] - b[1]) < tol), None)
    return SweepResult(vals, mono, stab)


@dataclass(frozen=True)
class BlockCheck:
    n: int
    weight: float
    block_cost: float
    canonical_value: float

    @property
    def gap(self) -> float:
        return self.block_cost - self.canonical_value


@dataclass(frozen=True)
class HullReport:
    blocks: list[BlockCheck]
    tol: float
    ok: bool = field(default=False)


def convex_hull_check(plan: GCPlan, cost, rho: DiscreteDensity, tol: float = 1e-7) -> HullReport:
    """Check that each fixed-``n`` block of an optimal plan is itself optimal.

    For every ``n`` with ``lambda_n > 0`` the block is rescaled to a
    probability, and its average cost is compared with the optimal value of
    the ``n``-particle problem for the block's own density.
    """
    bound = _bind(cost, rho)
    lam = plan_mass_distribution(plan)
    blocks = []
    for n, weight in enumerate(lam):
        if weight <= 0:
            continue
        sub = {o: w / weight for o, w in plan if sum(o) == n}
        occ = np.array(list(sub.keys()), dtype=np.int64)
        ws = np.array(list(sub.values()))
        block_cost = float(ws @ bound.batch(occ))
        dens = plan_density(GCPlan(sub, nmax=n, m=plan.m))
        if n == 0:
            canon = bound.c0
        else:
            block_rho = DiscreteDensity(rho.points, dens * (n / dens.sum()))
            canon = solve_canonical_full(block_rho, n, bound).value
        blocks.append(BlockCheck(n, float(weight), block_cost, canon))
    ok = all(abs(b.gap) <= tol for b in blocks)
    return HullReport(blocks, tol, ok)
