"""Half-filled atoms: every site carries mass 1/2 and holds at most one particle.

With all masses equal to 1/2 the admissible plans are exactly the laws of
random subsets whose one-site marginals are fair coins. The cost is
invariant under complementing the subset, so an optimum can be found among
the symmetric extreme points ``p^I = (delta_{1_I} + delta_{1_{I^c}}) / 2``,
which makes the problem a finite enumeration over subsets ``I``.
"""

from __future__ import annotations

import itertools
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import DiscreteDensity, GCPlan
from .costs import PairwiseCost, riesz

UNIQUE_MARGIN = 1e-9


class ScaleWarning(UserWarning):
    """The cluster scales are too small for the leading-order reduction to be trusted."""


@dataclass(frozen=True)
class HalfFillInstance:
    points: np.ndarray
    c2: PairwiseCost = field(default_factory=lambda: riesz(1.0))
    fill: float = 0.5

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if not 0 < self.fill < 1:
            raise ValueError("fill must lie in (0, 1)")
        object.__setattr__(self, "points", pts)

    @property
    def m(self) -> int:
        return self.points.shape[0]

    def density(self) -> DiscreteDensity:
        return DiscreteDensity(self.points, np.full(self.m, self.fill))

    def off_diagonal_matrix(self) -> np.ndarray:
        K = self.c2.matrix(self.points)
        np.fill_diagonal(K, 0.0)
        if not np.all(np.isfinite(K)):
            raise ValueError("pair kernel must be finite between distinct points")
        return K


def _masks(m: int, subsets: Sequence[Sequence[int]]) -> np.ndarray:
    S = np.zeros((len(subsets), m))
    for r, I in enumerate(subsets):
        S[r, list(I)] = 1.0
    return S


def _symmetric_costs(K: np.ndarray, S: np.ndarray) -> np.ndarray:
    # 1/2 [c(1_I) + c(1_{I^c})] with c(s) = s K s / 2 on a zero-diagonal K.
    T = 1.0 - S
    return 0.25 * (np.einsum("ri,ri->r", S @ K, S) + np.einsum("ri,ri->r", T @ K, T))


def extreme_point_cost(inst: HalfFillInstance, I: Sequence[int]) -> float:
    """Cost of ``p^I``: half the pair energy inside ``I`` plus half inside its complement."""
    return float(_symmetric_costs(inst.off_diagonal_matrix(), _masks(inst.m, [tuple(I)]))[0])


def extreme_point_plan(m: int, I: Sequence[int]) -> GCPlan:
    a = tuple(1 if i in set(I) else 0 for i in range(m))
    b = tuple(1 - k for k in a)
    w = {a: 0.5}
    w[b] = w.get(b, 0.0) + 0.5
    return GCPlan(w, nmax=m, m=m)


def candidate_subsets(m: int, sizes: Sequence[int] | None = None) -> list[tuple[int, ...]]:
    """One representative ``I`` per pair ``{I, I^c}``.

    Sizes default to ``0 .. m//2``. When ``|I| = m/2`` the representative is
    the one containing atom 0.
    """
    sizes = range(0, m // 2 + 1) if sizes is None else sizes
    out = []
    for k in sizes:
        if k < 0 or 2 * k > m:
            raise ValueError(f"subset size {k} outside 0..{m // 2}")
        for I in itertools.combinations(range(m), k):
            if 2 * k == m and 0 not in I:
                continue
            out.append(I)
    return out


@dataclass(frozen=True)
class HalfFillResult:
    value: float
    argmins: list[tuple[int, ...]]
    unique: bool
    margin: float
    candidates: list[tuple[tuple[int, ...], float]]

    @property
    def best(self) -> tuple[int, ...]:
        return self.argmins[0]

    def plan(self, m: int) -> GCPlan:
        return extreme_point_plan(m, self.best)


def solve_half_filling(inst: HalfFillInstance, sizes: Sequence[int] | None = None,
                       margin: float = UNIQUE_MARGIN) -> HalfFillResult:
    """Minimize over the symmetric extreme points.

    By default every subset size is enumerated, so the result is the optimum
    of the full problem for any finite pair kernel.
    """
    if not np.isclose(inst.fill, 0.5):
        raise ValueError("extreme-point enumeration needs exact half filling")
    cands = candidate_subsets(inst.m, sizes)
    vals = _symmetric_costs(inst.off_diagonal_matrix(), _masks(inst.m, cands))
    order = np.argsort(vals, kind="stable")
    best = float(vals[order[0]])
    argmins = [cands[i] for i in order if vals[i] <= best + margin]
    rest = [vals[i] for i in order if vals[i] > best + margin]
    gap = float(rest[0] - best) if rest else float("inf")
    return HalfFillResult(best, argmins, len(argmins) == 1, gap,
                          [(I, float(v)) for I, v in zip(cands, vals)])


def diamond_geometry(t: float) -> np.ndarray:
    """Six planar points: a unit-side rhombus with horizontal diagonal ``2t`` plus two outer points.

    Order: ``(-t, 0), (t, 0), (0, s), (0, -s), (-t-1, 0), (t+1, 0)`` with ``s = sqrt(1 - t^2)``.
    """
    if not 0 < t < 1:
        raise ValueError("t must lie in (0, 1)")
    s = float(np.sqrt(1.0 - t * t))
    return np.array([(-t, 0.0), (t, 0.0), (0.0, s), (0.0, -s), (-t - 1.0, 0.0), (t + 1.0, 0.0)])


def subset_label(I: Sequence[int]) -> str:
    return "I={" + ",".join(str(i) for i in I) + "}"


@dataclass(frozen=True)
class TCurve:
    t: np.ndarray
    subsets: list[tuple[int, ...]]
    values: np.ndarray  # shape (len(t), len(subsets))

    def argmin(self) -> np.ndarray:
        return np.argmin(self.values, axis=1)

    def rows(self):
        header = ["t"] + [subset_label(I) for I in self.subsets] + ["argmin", "argmin_size", "grand_canonical"]
        yield header
        for t, row, a in zip(self.t, self.values, self.argmin()):
            I = self.subsets[a]
            yield ([repr(float(t))] + [repr(float(v)) for v in row]
                   + [subset_label(I), str(len(I)), str(int(2 * len(I) != 6))])


def tcurve(t_grid: Sequence[float], c2: PairwiseCost | None = None, threads: int = 1) -> TCurve:
    """Costs of all extreme points with ``|I|`` in {2, 3} on the six-point diamond, per ``t``."""
    c2 = riesz(1.0) if c2 is None else c2
    subsets = candidate_subsets(6, (2, 3))
    S = _masks(6, subsets)

    def one(t):
        return _symmetric_costs(HalfFillInstance(diamond_geometry(t), c2).off_diagonal_matrix(), S)

    ts = [float(t) for t in t_grid]
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            rows = list(ex.map(one, ts))
    else:
        rows = [one(t) for t in ts]
    return TCurve(np.array(ts), subsets, np.array(rows).reshape(len(ts), len(subsets)))


@dataclass(frozen=True)
class RegionScan:
    xs: np.ndarray
    ys: np.ndarray
    mask: np.ndarray  # [iy, ix]: optimum has |I| != 3
    valid: np.ndarray  # False where the moved point collides with another atom


def region_scan(xs: Sequence[float], ys: Sequence[float], t: float = 0.7, moved: int = 5,
                c2: PairwiseCost | None = None, min_distance: float = 1e-6,
                threads: int = 1) -> RegionScan:
    """Move atom ``moved`` over a grid and record where the optimum is not canonical."""
    c2 = riesz(1.0) if c2 is None else c2
    base = diamond_geometry(t)
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)

    def one(y):
        row_mask, row_valid = [], []
        for x in xs:
            pts = base.copy()
            pts[moved] = (x, y)
            others = np.delete(pts, moved, axis=0)
            if np.min(np.linalg.norm(others - pts[moved], axis=1)) < min_distance:
                row_mask.append(False)
                row_valid.append(False)
                continue
            res = solve_half_filling(HalfFillInstance(pts, c2))
            row_mask.append(2 * len(res.best) != 6)
            row_valid.append(True)
        return row_mask, row_valid

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            out = list(ex.map(one, ys))
    else:
        out = [one(y) for y in ys]
    return RegionScan(xs, ys, np.array([o[0] for o in out], dtype=bool).reshape(len(ys), len(xs)),
                      np.array([o[1] for o in out], dtype=bool).reshape(len(ys), len(xs)))


def default_scales(k: int) -> list[float]:
    return [5.0 ** (j - 1) for j in range(2, k + 1)]


def _check_scales(k: int, scales) -> list[float]:
    if k < 1:
        raise ValueError("k must be >= 1")
    scales = default_scales(k) if scales is None else [float(s) for s in scales]
    if len(scales) != k - 1:
        raise ValueError(f"need {k - 1} scales for k={k}, got {len(scales)}")
    if any(s <= 0 for s in scales) or any(b <= a for a, b in zip(scales, scales[1:])):
        raise ValueError("scales must be positive and strictly increasing")
    return scales


def multiscale_points(k: int, scales: Sequence[float] | None = None, t: float = 0.7) -> np.ndarray:
    """``6^k`` points: level ``j`` places six copies of level ``j-1`` at ``scales[j-2] * X_i``.

    Point ``6 i + j`` of a level is point ``j`` of the previous level shifted
    by the ``i``-th base point times the scale.
    """
    scales = _check_scales(k, scales)
    base = diamond_geometry(t)
    pts = base
    for ell in scales:
        pts = np.concatenate([ell * X + pts for X in base], axis=0)
    return pts


@dataclass(frozen=True)
class LevelReport:
    level: int
    labels: tuple[int, ...]
    first_order_gap: float
    correction: float
    dominance: float
    exact_gap: float

    @property
    def valid(self) -> bool:
        """Every label's monopole gap exceeds its own correction."""
        return self.dominance > 0


@dataclass(frozen=True)
class MultiscaleResult:
    k: int
    n_minus: int
    n_plus: int
    occupation: np.ndarray  # indicator of the smaller configuration, length 6^k
    levels: list[LevelReport]
    value: float


def _pair_energy_rows(K: np.ndarray, S: np.ndarray) -> np.ndarray:
    return 0.5 * np.einsum("ri,ri->r", S @ K, S)


def multiscale_support(k: int, scales: Sequence[float] | None = None, t: float = 0.7,
                       c2: PairwiseCost | None = None) -> MultiscaleResult:
    """Particle numbers of the optimal symmetric plan within the nested family.

    At level 1 the six-point problem is enumerated. At level ``j`` each
    cluster keeps the level ``j-1`` optimum or its complement (label
    ``tau_i``), and the 2^6 label choices are scored with exact energies.
    Each level compares the exact scores with a cluster-monopole model (each
    cluster replaced by its particle count at its center). A
    :class:`ScaleWarning` is issued unless, for every label choice, the
    monopole gap to the best choice exceeds that choice's deviation from the
    model, or if the exact and monopole winners differ.
    """
    scales = _check_scales(k, scales)
    c2 = riesz(1.0) if c2 is None else c2
    base = diamond_geometry(t)
    first = solve_half_filling(HalfFillInstance(base, c2))
    if not first.unique:
        warnings.warn("the six-point optimum is not unique; the nested family is ambiguous",
                      ScaleWarning, stacklevel=2)
    occ = np.zeros(6)
    occ[list(first.best)] = 1.0
    levels = [LevelReport(1, tuple(int(v) for v in occ), first.margin, 0.0, first.margin, first.margin)]
    value = first.value
    prev = base
    taus = np.array(list(itertools.product([0, 1], repeat=6)), dtype=float)
    reps = taus[taus[:, 0] == 0]
    for j, ell in enumerate(scales, start=2):
        pts = np.concatenate([ell * X + prev for X in base], axis=0)
        size = prev.shape[0]
        K = c2.matrix(pts)
        np.fill_diagonal(K, 0.0)
        S = np.concatenate([np.where(reps[:, [i]] == 0, occ, 1.0 - occ) for i in range(6)], axis=1)
        exact = 0.5 * (_pair_energy_rows(K, S) + _pair_energy_rows(K, 1.0 - S))
        # Cluster-monopole approximation: each cluster acts as its particle count at its center.
        W = HalfFillInstance(ell * base, c2).off_diagonal_matrix()
        counts = S.reshape(len(reps), 6, size).sum(axis=2)
        comp = size - counts
        mono = 0.25 * (np.einsum("ri,ij,rj->r", counts, W, counts)
                       + np.einsum("ri,ij,rj->r", comp, W, comp))
        order = np.argsort(mono, kind="stable")
        best = int(order[0])
        first_gap = float(mono[order[1]] - mono[best])
        resid = exact - mono
        dev = np.abs(resid - resid[best])
        correction = float(np.max(dev))
        others = np.arange(len(reps)) != best
        dominance = float(np.min((mono - mono[best] - dev)[others]))
        eorder = np.argsort(exact, kind="stable")
        exact_gap = float(exact[eorder[1]] - exact[eorder[0]])
        best_exact = int(eorder[0])
        report = LevelReport(j, tuple(int(v) for v in reps[best_exact]), first_gap, correction, dominance,
                             exact_gap)
        if not report.valid or best_exact != best:
            warnings.warn(f"level {j}: scale {ell:g} too small (first-order gap {first_gap:.3g}, "
                          f"largest correction {correction:.3g})", ScaleWarning, stacklevel=2)
        levels.append(report)
        occ = S[best_exact]
        value = float(exact[best_exact])
        prev = pts
    n1 = int(occ.sum())
    n2 = occ.size - n1
    if n2 < n1:
        occ = 1.0 - occ
        n1, n2 = n2, n1
    return MultiscaleResult(k, n1, n2, occ.astype(np.int64), levels, value)
