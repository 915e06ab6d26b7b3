"""Deterministic optimal plans on the line for convex decreasing pair kernels.

For a density of mass ``n + eta`` the optimal plan uses ``n`` or ``n + 1``
particles placed at ``u, u + 1, u + 2, ...`` in mass coordinates: the first
particle sits at quantile ``u`` and each next one exactly one unit of mass
further right. Quantiles ``u < eta`` start ``n + 1`` particles, the rest ``n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .core import DiscreteDensity
from .costs import PairwiseCost, pairwise_family
from . import lp

Kernel = Callable[[np.ndarray], np.ndarray]


class QuadratureError(RuntimeError):
    pass


def _profile(w) -> Kernel:
    if isinstance(w, PairwiseCost):
        return w.of_distance
    return lambda r: np.asarray(w(np.asarray(r, dtype=float)), dtype=float)


@dataclass(frozen=True)
class GridDensity1D:
    """Piecewise-constant density: ``densities[k]`` on ``[breakpoints[k], breakpoints[k+1])``."""

    breakpoints: np.ndarray
    densities: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        d = np.asarray(self.densities, dtype=float)
        if b.ndim != 1 or d.ndim != 1 or b.size != d.size + 1 or d.size == 0:
            raise ValueError("need len(breakpoints) == len(densities) + 1 >= 2")
        if not np.all(np.isfinite(b)) or not np.all(np.isfinite(d)):
            raise ValueError("breakpoints and densities must be finite")
        if np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(d < 0):
            raise ValueError("densities must be nonnegative")
        cum = np.concatenate([[0.0], np.cumsum(d * np.diff(b))])
        if cum[-1] <= 0:
            raise ValueError("density has zero mass")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "densities", d)
        object.__setattr__(self, "_cum", cum)

    @classmethod
    def uniform(cls, a: float, b: float, level: float = 1.0) -> "GridDensity1D":
        return cls(np.array([a, b]), np.array([level]))

    @property
    def mass(self) -> float:
        return float(self._cum[-1])

    @property
    def cumulative(self) -> np.ndarray:
        return self._cum

    def cdf(self, x) -> np.ndarray:
        return np.interp(x, self.breakpoints, self._cum)

    def mass_between(self, x, y) -> np.ndarray:
        return self.cdf(y) - self.cdf(x)

    def quantile(self, u) -> np.ndarray:
        """Leftmost ``x`` with ``cdf(x) = u``, for ``u`` in ``[0, mass]``."""
        u = np.asarray(u, dtype=float)
        cum, b, d = self._cum, self.breakpoints, self.densities
        k = np.searchsorted(cum, u, side="left")
        k = np.clip(k, 1, len(b) - 1)
        cell = k - 1
        with np.errstate(divide="ignore", invalid="ignore"):
            x = b[cell] + (u - cum[cell]) / d[cell]
        x = np.where(u <= cum[0], b[0], x)
        return np.minimum(x, b[-1])


@dataclass(frozen=True)
class MongeBlock:
    """``particles`` particles at quantiles ``u, u+1, ...`` for ``u`` in ``(u_lo, u_hi)``."""

    particles: int
    u_lo: float
    u_hi: float

    @property
    def weight(self) -> float:
        return self.u_hi - self.u_lo


@dataclass(frozen=True)
class MongePlan1D:
    rho: GridDensity1D
    n: int
    eta: float
    cuts: np.ndarray
    blocks: tuple[MongeBlock, ...]

    def T(self, x) -> np.ndarray:
        """Increasing map with one unit of mass between ``x`` and ``T(x)``."""
        F = self.rho.cdf(x)
        if np.any(F > self.rho.mass - 1 + 1e-12):
            raise ValueError("T is only defined where at least one unit of mass lies to the right")
        return self.rho.quantile(F + 1.0)

    @property
    def support(self) -> list[int]:
        return sorted(b.particles for b in self.blocks if b.weight > 0)


def split_mass(mass: float, tol: float = 1e-12) -> tuple[int, float]:
    n = math.floor(mass)
    eta = mass - n
    if eta < tol:
        return n, 0.0
    if eta > 1 - tol:
        return n + 1, 0.0
    return n, eta


def build_monge_plan(rho: GridDensity1D) -> MongePlan1D:
    n, eta = split_mass(rho.mass)
    marks = [0.0]
    for i in range(n):
        marks += [i + eta, i + 1.0]
    if eta > 0:
        marks.append(n + eta)
    cuts = rho.quantile(np.array(marks))
    blocks = []
    if eta > 0:
        blocks.append(MongeBlock(n + 1, 0.0, eta))
    if n > 0 or eta > 0:
        blocks.append(MongeBlock(n, eta, 1.0))
    return MongePlan1D(rho, n, eta, cuts, tuple(blocks))


def _block_integrand(rho: GridDensity1D, particles: int, w: Kernel):
    def f(u: np.ndarray) -> np.ndarray:
        X = rho.quantile(u[:, None] + np.arange(particles)[None, :])
        total = np.zeros(u.shape)
        for j in range(particles):
            for k in range(j + 1, particles):
                r = X[:, k] - X[:, j]
                if np.any(r <= 0):
                    raise QuadratureError("two particles of a block coincide; kernel would diverge")
                total += w(r)
        return total
    return f


def _gl(f, a: float, b: float, nodes, weights) -> float:
    half = 0.5 * (b - a)
    return float(half * (weights @ f(0.5 * (a + b) + half * nodes)))


def monge_cost_with_error(plan: MongePlan1D, w, quad_tol: float = 1e-10, order: int = 16,
                          max_depth: int = 30) -> tuple[float, float]:
    """Cost of the plan by composite Gauss-Legendre quadrature, with an error estimate.

    Each block is split at the mass coordinates where some particle crosses a
    breakpoint of the density, so the integrand is smooth on every piece.
    Pieces are bisected until the one-level refinement changes the result by
    less than their share of ``quad_tol``.
    """
    prof = _profile(w)
    nodes, weights = leggauss(order)
    total, err = 0.0, 0.0
    cum = plan.rho.cumulative
    for blk in plan.blocks:
        if blk.particles < 2 or blk.weight <= 0:
            continue
        f = _block_integrand(plan.rho, blk.particles, prof)
        edges = {blk.u_lo, blk.u_hi}
        for j in range(blk.particles):
            for c in cum - j:
                if blk.u_lo < c < blk.u_hi:
                    edges.add(float(c))
        edges = sorted(edges)
        stack = [(a, b, 0) for a, b in zip(edges, edges[1:])]
        budget = quad_tol / len(plan.blocks)
        while stack:
            a, b, depth = stack.pop()
            coarse = _gl(f, a, b, nodes, weights)
            mid = 0.5 * (a + b)
            fine = _gl(f, a, mid, nodes, weights) + _gl(f, mid, b, nodes, weights)
            e = abs(fine - coarse)
            share = budget * (b - a) / blk.weight
            if e <= share or depth >= max_depth:
                if e > share:
                    raise QuadratureError("quadrature did not reach the requested tolerance")
                total += fine
                err += e
            else:
                stack += [(a, mid, depth + 1), (mid, b, depth + 1)]
    return total, err


def monge_cost(plan: MongePlan1D, w, quad_tol: float = 1e-10) -> float:
    return monge_cost_with_error(plan, w, quad_tol)[0]


def discretize(rho: GridDensity1D, cells: int) -> DiscreteDensity:
    """Equal-width cells over the support, one atom of the cell's mass at its barycenter."""
    edges = np.linspace(rho.breakpoints[0], rho.breakpoints[-1], cells + 1)
    knots = np.union1d(edges, rho.breakpoints)
    dens = rho.densities[np.clip(np.searchsorted(rho.breakpoints, knots[:-1], side="right") - 1,
                                 0, len(rho.densities) - 1)]
    seg_mass = dens * np.diff(knots)
    seg_moment = dens * 0.5 * (knots[1:] ** 2 - knots[:-1] ** 2)
    owner = np.clip(np.searchsorted(edges, knots[:-1], side="right") - 1, 0, cells - 1)
    mass = np.bincount(owner, seg_mass, minlength=cells)
    moment = np.bincount(owner, seg_moment, minlength=cells)
    keep = mass > 0
    return DiscreteDensity((moment[keep] / mass[keep]).reshape(-1, 1), mass[keep])


@dataclass(frozen=True)
class CrosscheckReport:
    monge_value: float
    lp_value: float
    lp_support: list[int]
    expected_support: list[int]
    cells: int
    nmax: int

    @property
    def gap(self) -> float:
        return abs(self.lp_value - self.monge_value)

    @property
    def support_ok(self) -> bool:
        return set(self.lp_support) <= set(self.expected_support)


def crosscheck_vs_lp(rho: GridDensity1D, w: PairwiseCost, cells: int = 40,
                     nmax: int | None = None) -> CrosscheckReport:
    """Compare the continuous plan's cost with the LP optimum of a discretization.

    ``nmax`` defaults to one more than the rounded-up mass, so the LP is free
    to use particle numbers outside the expected pair.
    """
    plan = build_monge_plan(rho)
    value = monge_cost(plan, w)
    atoms = discretize(rho, cells)
    nmax = math.ceil(rho.mass - 1e-12) + 1 if nmax is None else nmax
    sol = lp.solve(atoms, nmax, pairwise_family(w))
    return CrosscheckReport(value, sol.value, sol.support, plan.support, cells, nmax)


def _chain_cost(X: np.ndarray, prof: Kernel) -> float:
    X = np.sort(np.asarray(X, dtype=float).ravel())
    if X.size < 2:
        return 0.0
    i, j = np.triu_indices(X.size, 1)
    return float(np.sum(prof(np.abs(X[j] - X[i]))))


def interlacing_gap(Y: Sequence[float], Z: Sequence[float], w) -> float:
    """``c(Y) + c(Z) - c(X_odd) - c(X_even)`` where ``X`` is the sorted union of ``Y`` and ``Z``."""
    prof = _profile(w)
    X = np.sort(np.concatenate([np.ravel(Y), np.ravel(Z)]).astype(float))
    return (_chain_cost(Y, prof) + _chain_cost(Z, prof)
            - _chain_cost(X[0::2], prof) - _chain_cost(X[1::2], prof))


def interlacing_check(Y: Sequence[float], Z: Sequence[float], w, tol: float = 1e-12) -> bool:
    return interlacing_gap(Y, Z, w) >= -tol
