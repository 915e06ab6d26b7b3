"""Discrete densities and grand-canonical plans in occupation form.

A grand-canonical plan is a probability on finite particle configurations
whose number of particles may vary. Because every block is symmetric, a
configuration is identified with its occupation vector: ``o[i]`` counts the
particles sitting on support atom ``i``. A plan is then a sparse map from
occupation tuples to nonnegative weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

Occupation = tuple[int, ...]

NORMALIZATION_TOL = 1e-12
DENSITY_TOL = 1e-9


class PlanError(ValueError):
    """Raised for malformed densities or plans."""


@dataclass(frozen=True)
class DiscreteDensity:
    """Finite atomic density ``sum_i masses[i] * delta_{points[i]}``.

    Parameters
    ----------
    points : array_like, shape (m, d)
        Pairwise distinct atom locations.
    masses : array_like, shape (m,)
        Nonnegative atom masses.
    """

    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        ms = np.asarray(self.masses, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2:
            raise PlanError("points must be a 2-d array of shape (m, d)")
        if ms.ndim != 1 or ms.shape[0] != pts.shape[0]:
            raise PlanError("masses must have one entry per point")
        if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(ms)):
            raise PlanError("points and masses must be finite")
        if np.any(ms < 0):
            raise PlanError("masses must be nonnegative")
        if pts.shape[0] > 1:
            uniq = np.unique(pts, axis=0)
            if uniq.shape[0] != pts.shape[0]:
                raise PlanError("duplicate support points are not allowed")
        pts.setflags(write=False)
        ms.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", ms)

    @property
    def m(self) -> int:
        return int(self.masses.shape[0])

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def restrict(self, kept: Sequence[int]) -> "DiscreteDensity":
        idx = list(kept)
        return DiscreteDensity(self.points[idx], self.masses[idx])


@dataclass(frozen=True)
class GCPlan:
    """Grand-canonical plan stored as weights on occupation vectors."""

    weights: Mapping[Occupation, float]
    nmax: int
    m: int = field(default=-1)

    def __post_init__(self):
        clean: dict[Occupation, float] = {}
        m = self.m
        for occ, w in self.weights.items():
            occ = tuple(int(k) for k in occ)
            if m < 0:
                m = len(occ)
            if len(occ) != m:
                raise PlanError("all occupations must have the same length")
            if any(k < 0 for k in occ):
                raise PlanError("occupations must be nonnegative")
            if sum(occ) > self.nmax:
                raise PlanError(f"occupation {occ} exceeds nmax={self.nmax}")
            w = float(w)
            if not math.isfinite(w) or w < 0:
                raise PlanError("weights must be finite and nonnegative")
            if w > 0:
                clean[occ] = clean.get(occ, 0.0) + w
        object.__setattr__(self, "weights", dict(sorted(clean.items(), key=_occ_order)))
        object.__setattr__(self, "m", max(m, 0))

    def __iter__(self) -> Iterator[tuple[Occupation, float]]:
        return iter(self.weights.items())

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def total_weight(self) -> float:
        return float(math.fsum(self.weights.values()))

    def support(self) -> list[int]:
        """Particle numbers carrying positive weight."""
        return sorted({sum(o) for o in self.weights})

    def occupation_array(self) -> tuple[np.ndarray, np.ndarray]:
        """Occupations as an ``(V, m)`` int array together with the weight vector."""
        if not self.weights:
            return np.zeros((0, self.m), dtype=np.int64), np.zeros(0)
        occ = np.array(list(self.weights.keys()), dtype=np.int64).reshape(len(self.weights), self.m)
        return occ, np.fromiter(self.weights.values(), dtype=float, count=len(self.weights))


def _occ_order(item):
    occ = item[0]
    return (sum(occ), tuple(-k for k in occ))


def occupation_sort_key(occ: Occupation):
    """Deterministic ordering: by particle number, then lexicographically with site 0 first."""
    return _occ_order((occ, None))


def vacuum_plan(m: int, nmax: int = 0) -> GCPlan:
    return GCPlan({(0,) * m: 1.0}, nmax=nmax, m=m)


def plan_density(plan: GCPlan, m: int | None = None) -> np.ndarray:
    """Induced density ``rho_P(i) = sum_o o_i w(o)``."""
    m = plan.m if m is None else m
    out = np.zeros(m)
    for occ, w in plan:
        out += w * np.asarray(occ, dtype=float)
    return out


def plan_mass_distribution(plan: GCPlan) -> np.ndarray:
    """Vector ``lambda_n``: total weight of ``n``-particle configurations, for n = 0..nmax."""
    lam = np.zeros(plan.nmax + 1)
    for occ, w in plan:
        lam[sum(occ)] += w
    return lam


def _log_poisson_weight(occ: Sequence[int], log_masses: np.ndarray, total: float) -> float:
    s = -total
    for k, lm in zip(occ, log_masses):
        if k:
            s += k * lm - math.lgamma(k + 1)
    return s


def iter_occupations(m: int, nmax: int, caps: Sequence[int] | None = None) -> Iterator[Occupation]:
    """All occupation vectors with ``sum(o) <= nmax`` and ``o[i] <= caps[i]``.

    Ordered by particle number, then lexicographically with larger leading
    entries first (``e_1`` before ``e_2``).
    """
    caps = [nmax] * m if caps is None else [min(int(c), nmax) for c in caps]

    def rec(i: int, left: int) -> Iterator[list[int]]:
        if i == m:
            if left == 0:
                yield []
            return
        rest = sum(caps[i + 1:])
        for k in range(min(left, caps[i]), max(0, left - rest) - 1, -1):
            for tail in rec(i + 1, left - k):
                yield [k] + tail

    for n in range(nmax + 1):
        if n > sum(caps):
            break
        for occ in rec(0, n):
            yield tuple(occ)


def count_occupations(m: int, nmax: int, caps: Sequence[int] | None = None) -> int:
    """Number of vectors yielded by :func:`iter_occupations`, via a small DP."""
    caps = [nmax] * m if caps is None else [min(int(c), nmax) for c in caps]
    ways = [1] + [0] * nmax
    for c in caps:
        new = [0] * (nmax + 1)
        for s, v in enumerate(ways):
            if v:
                for k in range(0, min(c, nmax - s) + 1):
                    new[s + k] += v
        ways = new
    return sum(ways)


def poisson_weights(rho: DiscreteDensity, occupations: Iterable[Occupation]) -> np.ndarray:
    """Untruncated Poisson weights ``g(o) = exp(-rho(Omega)) prod rho_i^o_i / o_i!``."""
    with np.errstate(divide="ignore"):
        lm = np.log(rho.masses)
    total = rho.total_mass
    out = []
    for occ in occupations:
        if any(k > 0 and not np.isfinite(l) for k, l in zip(occ, lm)):
            out.append(0.0)
        else:
            out.append(math.exp(_log_poisson_weight(occ, lm, total)))
    return np.array(out)


def poisson_plan(rho: DiscreteDensity, nmax: int) -> tuple[GCPlan, float]:
    """Poisson state of ``rho`` truncated at ``nmax`` and renormalized.

    Returns
    -------
    plan : GCPlan
    tail : float
        Discarded mass ``1 - exp(-M) sum_{n<=nmax} M^n / n!`` with ``M = rho(Omega)``.
    """
    if nmax < 0:
        raise PlanError("nmax must be nonnegative")
    caps = [nmax if mass > 0 else 0 for mass in rho.masses]
    occs = list(iter_occupations(rho.m, nmax, caps))
    g = poisson_weights(rho, occs)
    total = rho.total_mass
    kept = math.fsum(math.exp(-total + n * math.log(total) - math.lgamma(n + 1)) if total > 0
                     else float(n == 0) for n in range(nmax + 1))
    tail = max(0.0, 1.0 - kept)
    s = math.fsum(g)
    plan = GCPlan({o: w / s for o, w in zip(occs, g)}, nmax=nmax, m=rho.m)
    return plan, tail


@dataclass(frozen=True)
class LocalizationResult:
    plan: GCPlan
    kept_indices: tuple[int, ...]


def localize(plan: GCPlan, kept: Iterable[int]) -> LocalizationResult:
    """Marginal law of the particles that land on the atoms in ``kept``."""
    idx = tuple(sorted(set(int(i) for i in kept)))
    if any(i < 0 or i >= plan.m for i in idx):
        raise PlanError("kept indices out of range")
    out: dict[Occupation, float] = {}
    for occ, w in plan:
        sub = tuple(occ[i] for i in idx)
        out[sub] = out.get(sub, 0.0) + w
    return LocalizationResult(GCPlan(out, nmax=plan.nmax, m=len(idx)), idx)


def two_species_density(rho1: DiscreteDensity, rho2: DiscreteDensity) -> DiscreteDensity:
    """Disjoint union of two densities, tagging species 1 and 2 in an extra coordinate."""
    if rho1.m and rho2.m and rho1.dim != rho2.dim:
        raise PlanError("densities must share the same dimension")
    dim = rho1.dim if rho1.m else rho2.dim
    p1 = np.hstack([rho1.points.reshape(rho1.m, dim), np.ones((rho1.m, 1))])
    p2 = np.hstack([rho2.points.reshape(rho2.m, dim), 2 * np.ones((rho2.m, 1))])
    return DiscreteDensity(np.vstack([p1, p2]), np.concatenate([rho1.masses, rho2.masses]))


@dataclass(frozen=True)
class PlanReport:
    normalization_residual: float
    density_residual: float
    support: tuple[int, int] | None
    flags: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.flags


def validate_plan(plan: GCPlan, rho: DiscreteDensity | None = None,
                  tol: float = DENSITY_TOL, norm_tol: float = NORMALIZATION_TOL) -> PlanReport:
    flags = []
    if len(plan) == 0:
        return PlanReport(1.0, math.inf, None, ("not a probability",))
    norm = abs(plan.total_weight - 1.0)
    if norm > norm_tol:
        flags.append("not a probability")
    dres = 0.0
    if rho is not None:
        if rho.m != plan.m:
            flags.append("support size mismatch")
            dres = math.inf
        else:
            dres = float(np.max(np.abs(plan_density(plan) - rho.masses), initial=0.0))
            if dres > tol:
                flags.append("density mismatch")
    sup = plan.support()
    return PlanReport(norm, dres, (sup[0], sup[-1]), tuple(flags))
