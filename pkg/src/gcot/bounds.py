"""Closed-form particle-number bounds and swap-optimality checks.

Each ``bound_*`` function returns the interval of particle numbers that an
optimal plan may charge under the corresponding structural assumption on
the cost. :func:`check_c_monotonicity` tests the pairwise exchange
condition that every optimal plan satisfies on its support.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import DiscreteDensity, GCPlan, Occupation
from .costs import BoundCost, CostFamily, PairwiseCost, pair_sum


@dataclass(frozen=True)
class SupportBound:
    lo: float
    hi: float
    theorem: str
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lo > self.hi + 1e-12:
            raise ValueError(f"empty bound [{self.lo}, {self.hi}]")

    def integers(self) -> list[int]:
        lo = max(0, math.ceil(self.lo - 1e-9))
        hi = math.floor(self.hi + 1e-9)
        return list(range(lo, hi + 1))

    def contains(self, ns) -> bool:
        allowed = set(self.integers())
        return all(int(n) in allowed for n in ns)

    def within(self, other: "SupportBound", tol: float = 1e-9) -> bool:
        """Interval inclusion ``[lo, hi]`` within ``[other.lo, other.hi]``."""
        return other.lo - tol <= self.lo and self.hi <= other.hi + tol


def _few_agents(mass: float, theorem: str) -> SupportBound | None:
    if mass <= 1:
        return SupportBound(0.0, 1.0, theorem, {"few_agents": True})
    return None


def bound_bounded(mass: float, m_lo: float, M_hi: float) -> SupportBound:
    """Costs with ``m <= c2 <= M`` off the diagonal."""
    if not 0 < m_lo <= M_hi < math.inf:
        raise ValueError("need 0 < m_lo <= M_hi < inf")
    few = _few_agents(mass, "bounded")
    if few:
        return few
    return SupportBound(m_lo / M_hi * math.floor(mass),
                        1 + M_hi / m_lo * (math.ceil(mass) - 1), "bounded")


def bound_triangle(mass: float, Z: float) -> SupportBound:
    """Positive costs with ``c2(x, y) <= Z (c2(x, z) + c2(z, y))``."""
    if Z <= 0:
        raise ValueError("Z must be positive")
    few = _few_agents(mass, "triangle")
    if few:
        return few
    return SupportBound((math.floor(mass) + 1) / (2 * Z + 1),
                        (2 * Z + 1) * (math.ceil(mass) - 1), "triangle")


def riesz_triangle_constant(s: float) -> float:
    return max(1.0, 2.0 ** (s - 1))


def coulomb_pair_allowed(N: int, K: int) -> bool:
    """Whether two support sizes ``N`` and ``K`` can coexist for the ``1/r`` kernel."""
    return (N - K) ** 2 <= N + K


def bound_coulomb(mass: float) -> SupportBound:
    """Support interval for the ``1/r`` kernel; exactly ``{2}`` at mass 2."""
    few = _few_agents(mass, "coulomb")
    if few:
        return few
    if abs(mass - 2.0) <= 1e-12:
        return SupportBound(2.0, 2.0, "coulomb")
    f, c = math.floor(mass), math.ceil(mass)
    return SupportBound(f - 0.5 * math.sqrt(8 * f + 9) + 1.5,
                        c + 0.5 * math.sqrt(8 * c - 7) - 0.5, "coulomb")


def bound_doubling(rho, r: float, kappa: float, C: float, R0: float, m_of_2R0: float,
                   M_of_r: float, M_inverse: Callable[[float], float] | None = None) -> SupportBound:
    """Upper bound for kernels that at most halve (by factor ``C``) when distances double.

    ``rho`` is a density or its total mass. ``kappa`` bounds the mass of any
    ball of radius ``r``; ``R0`` is a radius whose outside carries at most
    half of the mass. ``extras`` holds the bound on ``c2`` over pairs of
    occupied points and, with ``M_inverse``, the minimal separation it implies.
    """
    mass = rho.total_mass if isinstance(rho, DiscreteDensity) else float(rho)
    if not 0 <= kappa < 1:
        raise ValueError("kappa must lie in [0, 1)")
    if min(r, C, R0, m_of_2R0, M_of_r) <= 0:
        raise ValueError("r, C, R0, m(2 R0) and M(r) must be positive")
    hi = 1 + mass * max(2 / C ** 2, M_of_r / ((1 - kappa) * m_of_2R0))
    diag = mass * M_of_r / (1 - kappa)
    extras = {"diagonal_estimate": diag}
    if M_inverse is not None:
        extras["min_separation"] = float(M_inverse(diag))
    return SupportBound(0.0, hi, "doubling", extras)


def ball_mass_bound(rho: DiscreteDensity, r: float) -> float:
    """Upper bound on ``sup_x rho(B(x, r))``.

    Any ball of radius ``r`` that meets the support lies inside the ball of
    radius ``2r`` about one of its atoms.
    """
    D = np.linalg.norm(rho.points[:, None, :] - rho.points[None, :, :], axis=-1)
    return float(np.max((D <= 2 * r) @ rho.masses))


def half_mass_radius(rho: DiscreteDensity) -> float:
    """Smallest ``R`` with at most half the mass outside the ball of radius ``R`` about the barycenter."""
    center = rho.masses @ rho.points / rho.total_mass
    d = np.linalg.norm(rho.points - center, axis=1)
    order = np.argsort(d, kind="stable")
    outside = rho.total_mass - np.cumsum(rho.masses[order])
    k = int(np.argmax(outside <= 0.5 * rho.total_mass + 1e-15))
    return float(d[order][k])


def charged_cost(X, Y, c2: PairwiseCost) -> float:
    """Pair energy inside ``X`` plus inside ``Y`` minus the interaction between them."""
    X = np.asarray(X, dtype=float).reshape(len(X), -1) if len(X) else np.zeros((0, 1))
    Y = np.asarray(Y, dtype=float).reshape(len(Y), -1) if len(Y) else np.zeros((0, X.shape[1]))
    cross = float(c2.cross(X, Y).sum()) if len(X) and len(Y) else 0.0
    return pair_sum(X, c2) + pair_sum(Y, c2) - cross


@dataclass(frozen=True)
class Violation:
    first: Occupation
    second: Occupation
    split: tuple[int, ...]
    deficit: float


@dataclass(frozen=True)
class MonotonicityReport:
    pairs_checked: int
    splits_checked: int
    n_violations: int
    violations: list[Violation]
    worst_deficit: float

    @property
    def ok(self) -> bool:
        return self.n_violations == 0


def _split_masks(L: int, cap: int, rng: np.random.Generator, n_samples: int) -> np.ndarray:
    if L <= cap:
        return np.array(list(itertools.product([0, 1], repeat=L)), dtype=float).reshape(-1, L)
    return rng.integers(0, 2, size=(n_samples, L)).astype(float)


def check_c_monotonicity(plan: GCPlan, cost, points=None, samples: int = 2000, seed: int = 0,
                         split_cap: int = 12, split_samples: int = 4096,
                         tol: float = 1e-9, keep: int = 20) -> MonotonicityReport:
    """Exchange test on pairs of support configurations.

    For configurations ``X`` and ``Y`` from the support, every way of
    regrouping their particles into two new configurations must cost at least
    ``c(X) + c(Y)``. All splits are enumerated when ``|X| + |Y| <= split_cap``,
    otherwise ``split_samples`` splits are drawn. When there are more than
    ``samples`` configuration pairs, that many are drawn.
    """
    if isinstance(cost, BoundCost):
        bound = cost
    elif isinstance(cost, CostFamily):
        if points is None:
            raise ValueError("points are needed to bind a cost family")
        pts = points.points if isinstance(points, DiscreteDensity) else points
        bound = cost.bind(pts)
    else:
        raise TypeError("cost must be a CostFamily or BoundCost")
    rng = np.random.default_rng(seed)
    occs = list(plan.weights.keys())
    pairs = [(a, b) for a in range(len(occs)) for b in range(a, len(occs))]
    if len(pairs) > samples:
        idx = np.sort(rng.choice(len(pairs), size=samples, replace=False))
        pairs = [pairs[i] for i in idx]
    K = bound.pair_matrix
    violations: list[Violation] = []
    count = 0
    splits = 0
    worst = 0.0
    for a, b in pairs:
        oa, ob = np.array(occs[a]), np.array(occs[b])
        sites = np.concatenate([np.repeat(np.arange(bound.m), oa), np.repeat(np.arange(bound.m), ob)])
        L = sites.size
        if L == 0:
            continue
        base = float(bound(tuple(oa)) + bound(tuple(ob)))
        masks = _split_masks(L, split_cap, rng, split_samples)
        if K is not None:
            Kp = K[np.ix_(sites, sites)].copy()
            np.fill_diagonal(Kp, 0.0)
            inf = np.isposinf(Kp)
            Kf = np.where(inf, 0.0, Kp)
            comp = 1.0 - masks
            vals = 0.5 * (np.einsum("ri,ri->r", masks @ Kf, masks) + np.einsum("ri,ri->r", comp @ Kf, comp))
            if inf.any():
                Inf = inf.astype(float)
                blocked = (np.einsum("ri,ri->r", masks @ Inf, masks) > 0) | \
                          (np.einsum("ri,ri->r", comp @ Inf, comp) > 0)
                vals[blocked] = math.inf
        else:
            vals = np.empty(masks.shape[0])
            for r, mask in enumerate(masks.astype(bool)):
                left = np.bincount(sites[mask], minlength=bound.m)
                right = np.bincount(sites[~mask], minlength=bound.m)
                vals[r] = bound(tuple(left)) + bound(tuple(right))
        splits += masks.shape[0]
        deficit = base - vals
        bad = np.nonzero(deficit > tol)[0]
        count += bad.size
        if bad.size:
            worst = max(worst, float(deficit[bad].max()))
            for r in bad[: max(0, keep - len(violations))]:
                violations.append(Violation(occs[a], occs[b], tuple(int(v) for v in masks[r]),
                                            float(deficit[r])))
    return MonotonicityReport(len(pairs), splits, count, violations, worst)
