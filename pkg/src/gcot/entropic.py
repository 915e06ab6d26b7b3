"""Entropy-regularized grand-canonical transport.

All entropies are taken relative to the Poisson state of the target density,
whose weight on an occupation ``o`` is

    g(o) = exp(-M) prod_i rho_i^{o_i} / o_i!,      M = rho(Omega).

At temperature ``T`` the regularized value is ``P(c) + T H(P, G)``. Its
minimizer over plans with density ``rho`` is a Gibbs state

    w(o) = g(o) exp((-c(o) + o . psi) / T) / Z(psi),

where the potential ``psi`` is fixed by requiring the Gibbs density to equal
``rho``. Everything is evaluated in the log domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .core import DiscreteDensity, GCPlan, plan_density, plan_mass_distribution, poisson_plan
from .costs import BoundCost
from .lp import InfeasibleError, NonConvergence, _bind, _caps, build_instance


def relative_entropy(plan: GCPlan, ref: GCPlan) -> float:
    """``sum_o w(o) log(w(o) / g(o))``; ``inf`` when ``plan`` charges an occupation ``ref`` does not."""
    terms = []
    for occ, w in plan:
        g = ref.weights.get(occ, 0.0)
        if g <= 0:
            return math.inf
        terms.append(w * (math.log(w) - math.log(g)))
    return math.fsum(terms)


def _log_poisson(occ: np.ndarray, rho: DiscreteDensity) -> np.ndarray:
    with np.errstate(divide="ignore"):
        lr = np.log(rho.masses)
    O = np.asarray(occ, dtype=float).reshape(-1, rho.m)
    with np.errstate(invalid="ignore"):
        prod = np.where(O > 0, O * lr, 0.0).sum(axis=1)
    return -rho.total_mass + prod - gammaln(O + 1).sum(axis=1)


def poisson_relative_entropy(plan: GCPlan, rho: DiscreteDensity) -> float:
    """Relative entropy against the (untruncated) Poisson state of ``rho``."""
    occ, w = plan.occupation_array()
    if w.size == 0:
        return math.inf
    lg = _log_poisson(occ, rho)
    if np.any(~np.isfinite(lg)):
        return math.inf
    return math.fsum(w * (np.log(w) - lg))


def plan_entropy(plan: GCPlan) -> float:
    """``-sum_o w(o) log(w(o) prod_i o_i!)``: entropy with counting measure on ordered configurations."""
    occ, w = plan.occupation_array()
    return -math.fsum(w * (np.log(w) + gammaln(occ + 1).sum(axis=1)))


@dataclass(frozen=True)
class EntropyReport:
    S: float
    H: float
    growth_lhs: float


def entropy_report(plan: GCPlan, rho: DiscreteDensity) -> EntropyReport:
    lam = plan_mass_distribution(plan)
    growth = math.fsum(math.lgamma(n + 1) * l for n, l in enumerate(lam))
    return EntropyReport(plan_entropy(plan), poisson_relative_entropy(plan, rho), growth)


def _mass_log_mass(M: float) -> float:
    return M * math.log(M) if M > 0 else 0.0


def entropy_growth_check(plan: GCPlan, rho: DiscreteDensity, tol: float = 1e-12) -> bool:
    """``sum_n log(n!) lambda_n <= H(P, G) + log 2 + M log M``."""
    rep = entropy_report(plan, rho)
    return rep.growth_lhs <= rep.H + math.log(2) + _mass_log_mass(rho.total_mass) + tol


def max_entropy_terms(plan: GCPlan, rho: DiscreteDensity) -> tuple[float, float, float]:
    """Return ``(S, M - sum rho log rho - H, M - sum rho log rho)``."""
    ms = rho.masses[rho.masses > 0]
    top = rho.total_mass - math.fsum(ms * np.log(ms))
    return plan_entropy(plan), top - poisson_relative_entropy(plan, rho), top


def max_entropy_check(plan: GCPlan, rho: DiscreteDensity, tol: float = 1e-10) -> bool:
    """Entropy decomposition against the Poisson state, and the resulting upper bound."""
    S, decomposed, top = max_entropy_terms(plan, rho)
    return abs(S - decomposed) <= tol * max(1.0, abs(S)) and S <= top + tol


class _GibbsSystem:
    """Occupations, costs and Poisson log-weights shared by all Gibbs evaluations."""

    def __init__(self, rho: DiscreteDensity, nmax: int, cost):
        self.rho = rho
        self.nmax = nmax
        self.bound: BoundCost = _bind(cost, rho)
        inst = build_instance(rho, nmax, self.bound)
        self.occupations = inst.occupations
        self.O = inst.occ_array.astype(float)
        self.c = inst.costs
        self.logg = _log_poisson(self.O, rho)
        self.caps = _caps(rho, self.bound, nmax)

    def log_weights(self, psi: np.ndarray, T: float) -> np.ndarray:
        return self.logg + (-self.c + self.O @ psi) / T

    def evaluate(self, psi: np.ndarray, T: float):
        lw = self.log_weights(psi, T)
        logZ = float(logsumexp(lw))
        w = np.exp(lw - logZ)
        return logZ, w, w @ self.O

    def plan(self, w: np.ndarray) -> GCPlan:
        return GCPlan({o: x for o, x in zip(self.occupations, w) if x > 0}, nmax=self.nmax, m=self.rho.m)


@dataclass(frozen=True)
class GibbsSolution:
    psi: np.ndarray
    T: float
    log_Z: float
    plan: GCPlan
    density_residual: float
    iterations: int = 0
    cost_value: float = math.nan
    entropy: float = math.nan

    @property
    def Z(self) -> float:
        return math.exp(self.log_Z) if self.log_Z < 700 else math.inf

    @property
    def free_energy(self) -> float:
        """``-T log Z``."""
        return -self.T * self.log_Z

    @property
    def primal_value(self) -> float:
        """``P(c) + T H(P, G)``."""
        return self.cost_value + self.T * self.entropy

    def dual_value(self, rho: DiscreteDensity) -> float:
        return float(self.psi @ rho.masses) + self.free_energy


def log_partition_function(rho: DiscreteDensity, nmax: int, cost, psi, T: float) -> float:
    if T <= 0:
        raise ValueError("T must be positive")
    sysm = _GibbsSystem(rho, nmax, cost)
    return float(logsumexp(sysm.log_weights(np.asarray(psi, dtype=float), T)))


def partition_function(rho: DiscreteDensity, nmax: int, cost, psi, T: float) -> float:
    """``Z = sum_o g(o) exp((-c(o) + o . psi) / T)`` over finite-cost occupations with ``|o| <= nmax``."""
    lz = log_partition_function(rho, nmax, cost, psi, T)
    return math.exp(lz) if lz < 700 else math.inf


def _solution(sysm: _GibbsSystem, psi: np.ndarray, T: float, iterations: int = 0) -> GibbsSolution:
    logZ, w, dens = sysm.evaluate(psi, T)
    plan = sysm.plan(w)
    resid = float(np.max(np.abs(dens - sysm.rho.masses), initial=0.0))
    cost_value = float(w[w > 0] @ sysm.c[w > 0])
    H = poisson_relative_entropy(plan, sysm.rho)
    return GibbsSolution(psi.copy(), T, logZ, plan, resid, iterations, cost_value, H)


def gibbs_plan(rho: DiscreteDensity, nmax: int, cost, psi, T: float) -> GibbsSolution:
    if T <= 0:
        raise ValueError("T must be positive")
    sysm = _GibbsSystem(rho, nmax, cost)
    return _solution(sysm, np.asarray(psi, dtype=float), T)


def _check_interior(sysm: _GibbsSystem):
    rho = sysm.rho
    if rho.total_mass >= sysm.nmax:
        raise InfeasibleError(f"mass {rho.total_mass:g} is not below nmax={sysm.nmax}", row="mass")
    for i, (mass, cap) in enumerate(zip(rho.masses, sysm.caps)):
        if mass >= cap and mass > 0:
            raise InfeasibleError(f"atom {i} mass {mass:g} reaches its occupancy cap {cap}", row=i)


def _fixed_point(sysm, psi, T, tol, max_iter):
    rho = sysm.rho.masses
    active = rho > 0
    gamma = 0.5
    _, _, dens = sysm.evaluate(psi, T)
    resid = np.max(np.abs(dens - rho))
    increases = 0
    it = 0
    while resid > tol and it < max_iter:
        step = np.zeros_like(psi)
        step[active] = gamma * T * (np.log(rho[active]) - np.log(dens[active]))
        trial = psi + step
        _, _, tdens = sysm.evaluate(trial, T)
        tres = np.max(np.abs(tdens - rho))
        it += 1
        if tres < resid:
            psi, dens, resid = trial, tdens, tres
            gamma = min(2 * gamma, 1.0)
        else:
            gamma *= 0.5
            increases += 1
            if increases > 20 or gamma < 1e-6:
                break
    return psi, resid, it


def _newton(sysm, psi, T, tol, max_iter):
    rho = sysm.rho.masses
    active = np.nonzero(rho > 0)[0]
    O = sysm.O[:, active]
    r = rho[active]

    def psi_full(p):
        out = np.zeros(sysm.rho.m)
        out[active] = p
        return out

    def objective(p):
        lw = sysm.log_weights(psi_full(p), T)
        logZ = logsumexp(lw)
        w = np.exp(lw - logZ)
        return float(p @ r - T * logZ), w, float(np.max(np.abs(r - w @ O)))

    p = psi[active].copy()
    val, w, resid = objective(p)
    it = 0
    reg = 1e-12
    while it < max_iter and resid > tol:
        dens = w @ O
        grad = r - dens
        cov = (O * w[:, None]).T @ O - np.outer(dens, dens)
        scale = max(float(np.max(np.diag(cov))), 1e-300)
        direction = T * np.linalg.solve(cov + reg * scale * np.eye(len(r)), grad)
        slope = float(grad @ direction)
        if not slope > 0:
            direction, slope = grad.copy(), float(grad @ grad)
        # Close to the optimum the objective gain drops below rounding error,
        # so a step that keeps the objective and shrinks the residual is accepted too.
        noise = 64 * np.finfo(float).eps * (abs(val) + T * abs(float(np.log(max(w.max(), 1e-300)))) + 1.0)
        t = 1.0
        while t >= 1e-12:
            nv, nw, nres = objective(p + t * direction)
            if nv >= val + 1e-4 * t * slope or (nv >= val - noise and nres < resid):
                break
            t *= 0.5
        it += 1
        if t < 1e-12:
            if reg >= 1.0:
                break
            reg = min(reg * 100, 1.0)
            continue
        reg = max(reg / 10, 1e-14)
        p, val, w, resid = p + t * direction, nv, nw, nres
    return psi_full(p), resid, it


def _anneal(sysm, T, tol, max_iter):
    """Warm-started Newton solves on a decreasing ladder of temperatures ending at ``T``."""
    scale = max(1.0, float(np.max(np.abs(sysm.c), initial=0.0)))
    ladder = [T]
    while ladder[-1] < scale:
        ladder.append(ladder[-1] * 10)
    psi = np.zeros(sysm.rho.m)
    used, resid = 0, math.inf
    for t in reversed(ladder):
        psi, resid, it = _newton(sysm, psi, t, tol, max(max_iter - used, 0))
        used += it
    return psi, resid, used


def solve_entropic(rho: DiscreteDensity, nmax: int, cost, T: float, tol: float = 1e-8,
                   max_iter: int = 100_000, psi0=None, method: str = "auto") -> GibbsSolution:
    """Find the potential whose Gibbs state has density ``rho``.

    ``method="fixed-point"`` runs the damped update
    ``psi += gamma T log(rho / rho_psi)``; ``"newton"`` maximizes the concave
    dual ``psi . rho - T log Z(psi)`` with regularized Newton steps and a
    backtracking line search. ``"auto"`` starts with the fixed point and
    switches to Newton when it stalls, and finally to a warm-started
    descent through higher temperatures.

    Raises
    ------
    InfeasibleError
        ``rho`` is not in the interior of the reachable densities.
    NonConvergence
        The residual stays above ``tol``; the best residual is in the message.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if method not in ("auto", "fixed-point", "newton"):
        raise ValueError(f"unknown method {method!r}")
    sysm = rho if isinstance(rho, _GibbsSystem) else _GibbsSystem(rho, nmax, cost)
    _check_interior(sysm)
    psi = np.zeros(sysm.rho.m) if psi0 is None else np.asarray(psi0, dtype=float).copy()
    used = 0
    resid = math.inf
    if method in ("auto", "fixed-point"):
        budget = max_iter if method == "fixed-point" else min(max_iter, 200)
        psi, resid, used = _fixed_point(sysm, psi, T, tol, budget)
    if method == "auto" or (resid > tol and method == "newton"):
        # In auto mode Newton also polishes a converged fixed point, so that
        # primal and dual values agree well below the density tolerance.
        target = tol if resid > tol else min(tol, 1e-12)
        cand, cres, extra = _newton(sysm, psi, T, target, max(max_iter - used, 0) if resid > tol else 20)
        used += extra
        if cres <= resid:
            psi, resid = cand, cres
    if resid > tol and method == "auto":
        psi, resid, extra = _anneal(sysm, T, tol, max_iter - used)
        used += extra
    if resid > tol:
        raise NonConvergence(f"density residual {resid:.3g} above tolerance {tol:g} after {used} iterations")
    return _solution(sysm, psi, T, used)


@dataclass(frozen=True)
class SweepRow:
    T: float
    F: float
    H: float
    tv: float
    H_truncated: float
    density_residual: float

    @property
    def pinsker_ok(self) -> bool:
        return self.tv <= math.sqrt(2 * max(self.H_truncated, 0.0)) + 1e-12


@dataclass(frozen=True)
class SweepTable:
    rows: list[SweepRow]

    @property
    def nondecreasing(self) -> bool:
        return all(b.F >= a.F - 1e-9 for a, b in zip(self.rows, self.rows[1:]))

    @property
    def concave(self) -> bool:
        slopes = [(b.F - a.F) / (b.T - a.T) for a, b in zip(self.rows, self.rows[1:])]
        return all(s2 <= s1 + 1e-9 * max(1.0, abs(s1)) for s1, s2 in zip(slopes, slopes[1:]))

    def csv_rows(self):
        yield ["T", "F_T", "H", "tv_to_poisson", "H_truncated", "density_residual"]
        for r in self.rows:
            yield [repr(r.T), repr(r.F), repr(r.H), repr(r.tv), repr(r.H_truncated), repr(r.density_residual)]


def temperature_sweep(rho: DiscreteDensity, nmax: int, cost, T_list, tol: float = 1e-8) -> SweepTable:
    """Regularized values over temperatures, solved from hot to cold with warm starts.

    ``tv`` is the L1 distance to the truncated, renormalized Poisson state and
    ``H_truncated`` the relative entropy against it, so that Pinsker's
    inequality ``tv <= sqrt(2 H_truncated)`` applies directly.
    """
    Ts = sorted(float(t) for t in T_list)
    if not Ts or Ts[0] <= 0:
        raise ValueError("temperatures must be positive")
    sysm = _GibbsSystem(rho, nmax, cost)
    ref, _ = poisson_plan(rho, nmax)
    rows = []
    psi = None
    for T in reversed(Ts):
        sol = solve_entropic(sysm, nmax, None, T, tol=tol, psi0=psi)
        psi = sol.psi
        tv = math.fsum(abs(sol.plan.weights.get(o, 0.0) - g) for o, g in ref) + \
            math.fsum(w for o, w in sol.plan if o not in ref.weights)
        rows.append(SweepRow(T, sol.primal_value, sol.entropy, tv,
                             relative_entropy(sol.plan, ref), sol.density_residual))
    return SweepTable(rows[::-1])


def feasibility_probe(rho: DiscreteDensity, nmax: int, cost, T: float, eps: float = 1e-3) -> bool:
    """Whether the regularized problem is solvable for the slightly inflated density ``(1 + eps) rho``."""
    bigger = DiscreteDensity(rho.points, rho.masses * (1 + eps))
    try:
        solve_entropic(bigger, nmax, cost, T)
    except (InfeasibleError, NonConvergence):
        return False
    return True


def critical_scaling(rho: DiscreteDensity, nmax: int, cost, T: float, upper: float = 10.0,
                     steps: int = 30) -> float:
    """Bisection for the largest ``s`` in ``[1, upper]`` with ``s rho`` still solvable."""
    def ok(s):
        try:
            solve_entropic(DiscreteDensity(rho.points, rho.masses * s), nmax, cost, T)
            return True
        except (InfeasibleError, NonConvergence):
            return False
    if not ok(1.0):
        return math.nan
    lo, hi = 1.0, upper
    if ok(hi):
        return hi
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


def two_agent_distribution(plan: GCPlan) -> np.ndarray:
    """Expected number of particle pairs per pair of atoms.

    Upper-triangular: entry ``(i, j)``, ``i < j``, is ``sum_o w(o) o_i o_j``;
    the diagonal holds ``sum_o w(o) o_i (o_i - 1) / 2``. For pair costs,
    ``P(c) = sum_{i <= j} R[i, j] c2(x_i, x_j)``.
    """
    occ, w = plan.occupation_array()
    O = occ.astype(float)
    R = np.triu((O * w[:, None]).T @ O, 1)
    R[np.diag_indices(plan.m)] = w @ (0.5 * O * (O - 1))
    return R


def pair_cost_from_distribution(R: np.ndarray, K: np.ndarray) -> float:
    mask = R > 0
    if np.any(np.isposinf(K[mask])):
        return math.inf
    return float(np.sum(R[mask] * K[mask]))


@dataclass(frozen=True)
class BlockApproximation:
    plan: GCPlan
    cells: list[tuple[int, ...]]
    cost_gap: float
    gap_bound: float
    relative_entropy: float


def _cell_compositions(atoms: list[int], k: int):
    if not atoms:
        if k == 0:
            yield ()
        return
    if len(atoms) == 1:
        yield (k,)
        return
    for a in range(k, -1, -1):
        for rest in _cell_compositions(atoms[1:], k - a):
            yield (a,) + rest


def block_approximation(plan: GCPlan, points, h: float, cost=None) -> BlockApproximation:
    """Replace the plan inside each cube of side ``h`` by independent draws from the density.

    The number of particles per cell keeps its joint law; inside a cell,
    particles are placed independently according to the plan's density
    restricted to that cell. The density is preserved exactly. With a pair
    ``cost``, the report includes the cost change and the bound
    ``sum over cell pairs of (oscillation of c2) x (expected pair count)``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    pts = np.asarray(points, dtype=float).reshape(plan.m, -1)
    rho_vals = plan_density(plan)
    keys = [tuple(int(v) for v in np.floor(p / h)) for p in pts]
    cells = sorted(set(keys))
    members = {z: [i for i in range(plan.m) if keys[i] == z and rho_vals[i] > 0] for z in cells}
    cell_mass = {z: float(sum(rho_vals[i] for i in members[z])) for z in cells}
    counts: dict[tuple[int, ...], float] = {}
    for occ, w in plan:
        k = tuple(sum(occ[i] for i in range(plan.m) if keys[i] == z) for z in cells)
        counts[k] = counts.get(k, 0.0) + w
    out: dict[tuple[int, ...], float] = {}
    for k, W in counts.items():
        parts = []
        for z, kz in zip(cells, k):
            atoms = members[z]
            opts = []
            for comp in _cell_compositions(atoms, kz):
                lp_ = math.lgamma(kz + 1)
                for i, a in zip(atoms, comp):
                    lp_ += a * math.log(rho_vals[i] / cell_mass[z]) - math.lgamma(a + 1)
                opts.append((comp, math.exp(lp_)))
            parts.append((atoms, opts))
        stack = [((), W)]
        for atoms, opts in parts:
            stack = [(assign + tuple(zip(atoms, comp)), p * q) for assign, p in stack for comp, q in opts]
        for assign, p in stack:
            o = [0] * plan.m
            for i, a in assign:
                o[i] = a
            key = tuple(o)
            out[key] = out.get(key, 0.0) + p
    new = GCPlan(out, nmax=plan.nmax, m=plan.m)
    rho = DiscreteDensity(pts, rho_vals)
    H = poisson_relative_entropy(new, rho)
    gap = bound = math.nan
    if cost is not None:
        K = _bind(cost, rho).pair_matrix if not isinstance(cost, np.ndarray) else cost
        if K is None:
            raise ValueError("block cost comparison needs a pair cost")
        R0, R1 = two_agent_distribution(plan), two_agent_distribution(new)
        gap = abs(pair_cost_from_distribution(R1, K) - pair_cost_from_distribution(R0, K))
        zi = np.array([cells.index(z) for z in keys])
        bound = 0.0
        for a in range(len(cells)):
            for b in range(a, len(cells)):
                sel = np.zeros_like(R0, dtype=bool)
                ia, ib = zi == a, zi == b
                sel |= np.outer(ia, ib) | np.outer(ib, ia)
                sel &= np.triu(np.ones_like(sel), 0).astype(bool)
                mass = float(R0[sel].sum())
                if mass <= 0:
                    continue
                vals = K[sel]
                bound += mass * float(vals.max() - vals.min())
    return BlockApproximation(new, cells, gap, bound, H)
