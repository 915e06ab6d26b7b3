"""Cost families on particle configurations.

A cost family assigns a value in ``R U {+inf}`` to every finite configuration.
Two builders are provided: pair interactions ``sum_{i<j} c2(x_i, x_j)`` and
convex functions of the center of mass. Either can be *bound* to the atoms of
a :class:`~gcot.core.DiscreteDensity`, after which it evaluates occupation
vectors directly (and in batches).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import DiscreteDensity, Occupation


class CostSpecError(ValueError):
    """Raised for invalid kernel parameters or unparsable cost strings."""


@dataclass(frozen=True)
class PairwiseCost:
    """Symmetric two-body interaction.

    Radial kernels are given as ``profile(r)`` for ``r > 0`` together with the
    value assigned to coincident points (``diagonal``). A non-radial kernel
    may be supplied through ``pointwise(x, y)`` instead.
    """

    name: str
    profile: Callable[[np.ndarray], np.ndarray] | None
    diagonal: float
    params: dict = field(default_factory=dict)
    nonnegative: bool = False
    pointwise: Callable[[np.ndarray, np.ndarray], float] | None = None

    def __call__(self, x, y) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if self.pointwise is not None:
            return float(self.pointwise(x, y))
        r = float(np.linalg.norm(x - y))
        if r == 0.0:
            return float(self.diagonal)
        return float(self.profile(np.array([r]))[0])

    def of_distance(self, r) -> np.ndarray:
        """Kernel as a function of distance, with ``diagonal`` at r = 0."""
        if self.profile is None:
            raise CostSpecError(f"kernel {self.name!r} is not radial")
        r = np.asarray(r, dtype=float)
        out = np.full(r.shape, float(self.diagonal))
        pos = r > 0
        if np.any(pos):
            out[pos] = self.profile(r[pos])
        return out

    def matrix(self, points: np.ndarray) -> np.ndarray:
        """``K[i, j] = c2(x_i, x_j)``, with the kernel's diagonal value on ``i == j``."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if self.pointwise is not None:
            m = pts.shape[0]
            K = np.empty((m, m))
            for i in range(m):
                for j in range(i, m):
                    K[i, j] = K[j, i] = self.pointwise(pts[i], pts[j])
            return K
        D = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
        return self.of_distance(D)

    def cross(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """``c2(X[a], Y[b])`` for all a, b."""
        X = np.asarray(X, dtype=float).reshape(len(X), -1)
        Y = np.asarray(Y, dtype=float).reshape(len(Y), -1)
        if self.pointwise is not None:
            return np.array([[self.pointwise(x, y) for y in Y] for x in X]).reshape(len(X), len(Y))
        D = np.sqrt(((X[:, None, :] - Y[None, :, :]) ** 2).sum(-1))
        return self.of_distance(D)


def riesz(s: float) -> PairwiseCost:
    """``|x-y|^{-s}`` for s > 0, ``-log|x-y|`` for s = 0, ``-|x-y|^{-s}`` for s < 0."""
    s = float(s)
    if s > 0:
        return PairwiseCost("riesz", lambda r: r ** (-s), math.inf, {"s": s}, nonnegative=True)
    if s == 0:
        return PairwiseCost("riesz", lambda r: -np.log(r), math.inf, {"s": 0.0})
    return PairwiseCost("riesz", lambda r: -(r ** (-s)), 0.0, {"s": s})


def coulomb(d: int = 3) -> PairwiseCost:
    """Coulomb kernel of dimension ``d``; the default ``d = 3`` gives ``1/|x-y|``."""
    d = int(d)
    if d < 1:
        raise CostSpecError("coulomb dimension must be >= 1")
    base = riesz(d - 2 if d >= 3 else (0 if d == 2 else -1))
    return PairwiseCost("coulomb", base.profile, base.diagonal, {"d": d}, base.nonnegative)


def log_cost() -> PairwiseCost:
    base = riesz(0)
    return PairwiseCost("log", base.profile, base.diagonal, {})


def lennard_jones(A: float, B: float, a: float, b: float, dim: int = 3) -> PairwiseCost:
    """``A / r^a - B / r^b`` with ``a > b > dim``."""
    if not (A > 0 and B >= 0):
        raise CostSpecError("Lennard-Jones needs A > 0 and B >= 0")
    if not (a > b > dim):
        raise CostSpecError("Lennard-Jones needs exponents a > b > dim")
    return PairwiseCost("lj", lambda r: A * r ** (-a) - B * r ** (-b), math.inf,
                        {"A": A, "B": B, "a": a, "b": b, "dim": dim})


def constant(c: float) -> PairwiseCost:
    """The same value ``c`` for every pair, coincident points included."""
    c = float(c)
    return PairwiseCost("constant", lambda r: np.full(np.shape(r), c), c, {"c": c},
                        nonnegative=c >= 0)


def exponential(a: float = 1.0) -> PairwiseCost:
    """``exp(-a r)``."""
    if a <= 0:
        raise CostSpecError("exponential rate must be positive")
    return PairwiseCost("exp", lambda r: np.exp(-a * r), 1.0, {"a": a}, nonnegative=True)


def harmonic(k: float = 1.0) -> PairwiseCost:
    """``k |x-y|^2``; negative ``k`` gives the repulsive harmonic interaction."""
    return PairwiseCost("harmonic", lambda r: k * r * r, 0.0, {"k": k}, nonnegative=k >= 0)


@dataclass(frozen=True)
class CostFamily:
    """Cost of every finite configuration.

    Attributes
    ----------
    c0 : float
        Cost of the empty configuration.
    config_cost : callable
        Maps an ``(n, d)`` array of positions (n >= 1) to a float or ``inf``.
    stability : (A, B) or None
        Known constants with ``c_n >= -A - B n``.
    monotone_flag : bool
        Whether ``c_{n+1} >= c_n - A`` is known to hold.
    pair : PairwiseCost or None
        Set for pair-interaction families; enables vectorized evaluation.
    """

    c0: float
    config_cost: Callable[[np.ndarray], float]
    stability: tuple[float, float] | None = None
    monotone_flag: bool = False
    pair: PairwiseCost | None = None
    name: str = "custom"

    def __call__(self, X) -> float:
        X = np.asarray(X, dtype=float)
        if X.size == 0:
            return float(self.c0)
        return float(self.config_cost(X.reshape(X.shape[0], -1)))

    def bind(self, points) -> "BoundCost":
        return BoundCost(self, np.asarray(points, dtype=float).reshape(len(points), -1))


def _pair_config_cost(c2: PairwiseCost):
    def cost(X: np.ndarray) -> float:
        n = X.shape[0]
        if n < 2:
            return 0.0
        K = c2.matrix(X)
        iu = np.triu_indices(n, 1)
        vals = K[iu]
        if np.any(np.isposinf(vals)):
            return math.inf
        return float(vals.sum())
    return cost


def pairwise_family(c2: PairwiseCost) -> CostFamily:
    """``c_n(x_1..x_n) = sum_{i<j} c2(x_i, x_j)``, so ``c_0 = c_1 = 0``."""
    stab = (0.0, 0.0) if c2.nonnegative else None
    return CostFamily(0.0, _pair_config_cost(c2), stab, c2.nonnegative, c2, f"pair:{c2.name}")


def center_of_mass_family(h: Callable[[np.ndarray], float], grad_h: Callable[[np.ndarray], np.ndarray],
                          rho: DiscreteDensity) -> CostFamily:
    """``c_n(x_1..x_n) = h(x_1 + ... + x_n)`` and ``c_0 = h(X) - X . grad h(X)`` with ``X = int x drho``."""
    X = rho.masses @ rho.points
    c0 = float(h(X) - X @ np.asarray(grad_h(X), dtype=float))
    return CostFamily(c0, lambda P: float(h(P.sum(axis=0))), None, False, None, "center-of-mass")


def stability_probe(c2: PairwiseCost, rho: DiscreteDensity) -> float:
    """``sum_{i,j} rho_i rho_j c2(x_i, x_j)``, self-pairs included; negative means unstable."""
    K = c2.matrix(rho.points)
    W = np.outer(rho.masses, rho.masses)
    active = W > 0
    if np.any(np.isposinf(K[active])):
        return math.inf
    return float((W[active] * K[active]).sum())


class BoundCost:
    """A cost family evaluated on occupation vectors over fixed atoms."""

    def __init__(self, family: CostFamily, points: np.ndarray):
        self.family = family
        self.points = points
        self.m = points.shape[0]
        self.c0 = float(family.c0)
        self._K = None
        if family.pair is not None:
            K = family.pair.matrix(points)
            if np.any(np.isneginf(K)) or np.any(np.isnan(K)):
                raise CostSpecError("pair kernel must not take the value -inf or nan")
            self._K = K
            self._inf = np.isposinf(K)
            self._Kf = np.where(self._inf, 0.0, K)
            self._diag = np.diag(self._Kf).copy()
            self._diag_inf = np.diag(self._inf).copy()
            self._off = self._Kf - np.diag(self._diag)
            self._off_inf = self._inf & ~np.eye(self.m, dtype=bool)
            self._any_off_inf = bool(self._off_inf.any())

    @property
    def pair_matrix(self) -> np.ndarray | None:
        return self._K

    def site_caps(self, nmax: int) -> list[int]:
        """Largest occupation of each atom that can have finite cost."""
        if self._K is None:
            return [nmax] * self.m
        return [1 if inf else nmax for inf in self._diag_inf]

    def __call__(self, occ: Occupation) -> float:
        return float(self.batch(np.asarray([occ]))[0])

    def batch(self, occs: np.ndarray) -> np.ndarray:
        O = np.asarray(occs, dtype=float).reshape(-1, self.m)
        if O.shape[0] == 0:
            return np.zeros(0)
        if self._K is None:
            out = np.empty(O.shape[0])
            for v, row in enumerate(O.astype(np.int64)):
                if row.sum() == 0:
                    out[v] = self.c0
                else:
                    out[v] = self.family(np.repeat(self.points, row, axis=0))
            return out
        vals = 0.5 * np.einsum("vi,vi->v", O @ self._off, O)
        vals += (0.5 * O * (O - 1)) @ self._diag
        bad = ((O >= 2) & self._diag_inf).any(axis=1)
        if self._any_off_inf:
            occ = (O > 0).astype(float)
            bad |= np.einsum("vi,vi->v", occ @ self._off_inf.astype(float), occ) > 0
        vals[bad] = math.inf
        vals[O.sum(axis=1) == 0] = self.c0
        return vals


_NAMES = {
    "riesz": (riesz, ("s",)),
    "coulomb": (coulomb, ("d",)),
    "log": (log_cost, ()),
    "lj": (lennard_jones, ("A", "B", "a", "b", "dim")),
    "constant": (constant, ("c",)),
    "exp": (exponential, ("a",)),
    "harmonic": (harmonic, ("k",)),
}


def parse_pair_cost(spec: str) -> PairwiseCost:
    """Parse ``name[:key=val,...]``, for instance ``riesz:s=1`` or ``lj:A=1,B=1,a=12,b=6``.

    ``inv`` (also written ``inv:r``) is shorthand for ``1/r``.
    """
    spec = spec.strip()
    name, _, rest = spec.partition(":")
    name = name.strip().lower()
    if name == "inv":
        if rest.strip() not in ("", "r"):
            raise CostSpecError(f"unexpected parameters for inv: {rest!r}")
        return riesz(1.0)
    if name not in _NAMES:
        raise CostSpecError(f"unknown cost {name!r}; known: inv, {', '.join(sorted(_NAMES))}")
    builder, allowed = _NAMES[name]
    kwargs = {}
    if rest.strip():
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            key = key.strip()
            if not eq or key not in allowed:
                raise CostSpecError(f"bad parameter {item!r} for {name}; allowed: {allowed}")
            try:
                kwargs[key] = int(val) if key in ("d", "dim") else float(val)
            except ValueError as exc:
                raise CostSpecError(f"parameter {key} must be numeric") from exc
    if name == "constant" and "c" not in kwargs:
        kwargs["c"] = 1.0
    if name == "riesz" and "s" not in kwargs:
        raise CostSpecError("riesz needs s=...")
    if name == "lj":
        missing = [k for k in ("A", "B", "a", "b") if k not in kwargs]
        if missing:
            raise CostSpecError(f"lj needs {missing}")
    try:
        return builder(**kwargs)
    except TypeError as exc:
        raise CostSpecError(str(exc)) from exc


def parse_cost(spec: str) -> CostFamily:
    return pairwise_family(parse_pair_cost(spec))


def pair_sum(points: np.ndarray, c2: PairwiseCost) -> float:
    """``sum_{i<j} c2(x_i, x_j)`` over a list of positions."""
    if len(points) < 2:
        return 0.0
    return _pair_config_cost(c2)(np.asarray(points, dtype=float).reshape(len(points), -1))


def occupation_points(points: np.ndarray, occ: Sequence[int]) -> np.ndarray:
    """Expand an occupation vector into the list of particle positions."""
    return np.repeat(np.asarray(points), np.asarray(occ, dtype=np.int64), axis=0)
