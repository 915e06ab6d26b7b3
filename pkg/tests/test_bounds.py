import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gcot import bounds as B
from gcot import lp
from gcot.core import DiscreteDensity, GCPlan
from gcot.costs import coulomb, pair_sum, pairwise_family, riesz
from gcot.halffill import diamond_geometry


def test_bounded_cost():
    b = B.bound_bounded(3, 2, 2)
    assert b.integers() == [3]
    b = B.bound_bounded(3, 1, 2)
    assert (b.lo, b.hi) == (1.5, 5.0)
    assert B.bound_bounded(0.4, 1, 2).integers() == [0, 1]


def test_triangle():
    for N in range(2, 7):
        b = B.bound_triangle(N, 1)
        assert (b.lo, b.hi) == pytest.approx(((N + 1) / 3, 3 * N - 3))
    assert B.bound_triangle(2, 1).integers() == [1, 2, 3]
    m, M = 1.0, 3.0
    tri = B.bound_triangle(3, M / (2 * m))
    assert tri.integers() == list(range(1, 9))
    assert B.riesz_triangle_constant(1) == 1 and B.riesz_triangle_constant(3) == 4


def test_coulomb_bound():
    assert B.bound_coulomb(3).integers() == [2, 3, 4]
    assert B.bound_coulomb(2).integers() == [2]
    assert B.coulomb_pair_allowed(4, 3)
    assert B.coulomb_pair_allowed(5, 3)  # (5-3)^2 = 4 <= 8
    assert not B.coulomb_pair_allowed(7, 3)
    assert not B.coulomb_pair_allowed(3, 0)


@pytest.mark.parametrize("mass", np.linspace(1.05, 6.0, 34))
def test_coulomb_within_triangle(mass):
    c, t = B.bound_coulomb(mass), B.bound_triangle(mass, 1)
    assert set(c.integers()) <= set(t.integers())
    if mass >= 2:
        assert c.within(t)


def test_doubling_substitution():
    b = B.bound_doubling(3.0, r=0.1, kappa=0.5, C=2 ** -1, R0=1.0, m_of_2R0=0.5, M_of_r=0.5)
    # M(r) = m(2 R0) and kappa = 1/2 make the second entry of the max equal to 2.
    assert b.hi == pytest.approx(1 + 3.0 * max(2 / 0.25, 2))
    assert b.lo == 0


def test_doubling_separation_for_coulomb():
    c2 = riesz(1)
    mass, kappa, r = 2.0, 0.3, 0.05
    b = B.bound_doubling(mass, r, kappa, 0.5, 1.0, c2.of_distance(np.array([2.0]))[0],
                         c2.of_distance(np.array([r]))[0], lambda v: 1.0 / v)
    assert b.extras["min_separation"] == pytest.approx((1 - kappa) * r / mass)


def test_ball_mass_and_half_mass_radius():
    rho = DiscreteDensity([[0.0], [1.0], [10.0]], [0.2, 0.3, 0.5])
    assert B.ball_mass_bound(rho, 0.5) == pytest.approx(0.5)
    assert B.ball_mass_bound(rho, 0.1) == pytest.approx(0.5)
    R0 = B.half_mass_radius(rho)
    center = 0.3 + 5.0
    d = np.abs(rho.points[:, 0] - center)
    assert rho.masses[d > R0].sum() <= 0.5 + 1e-12


def test_charged_cost():
    c2 = coulomb()
    assert B.charged_cost([[0.0]], [[1.0]], c2) == -1.0
    X = np.array([[0.0], [1.0], [3.0]])
    assert B.charged_cost(X, [], c2) == pytest.approx(pair_sum(X, c2))


def test_charged_cost_splitting_identity():
    rng = np.random.default_rng(1)
    c2 = riesz(1)
    X, Y = rng.random((4, 2)), rng.random((3, 2)) + 2
    I, J = [0, 2], [1]
    Ic, Jc = [1, 3], [0, 2]
    lhs = B.charged_cost(X, Y, c2) - B.charged_cost(X[I], Y[J], c2) - B.charged_cost(X[Ic], Y[Jc], c2)
    cross = (c2.cross(X[I], X[Ic]).sum() + c2.cross(Y[J], Y[Jc]).sum()
             - c2.cross(X[I], Y[Jc]).sum() - c2.cross(X[Ic], Y[J]).sum())
    assert lhs == pytest.approx(cross, abs=1e-12)


def test_monotonicity_on_optima(unit_pair):
    fam = pairwise_family(coulomb())
    plan = lp.solve(unit_pair, 4, fam).plan
    assert B.check_c_monotonicity(plan, fam, unit_pair.points).ok
    pts = diamond_geometry(0.7)
    rho = DiscreteDensity(pts, np.full(6, 0.5))
    fam = pairwise_family(riesz(1))
    assert B.check_c_monotonicity(lp.solve(rho, 6, fam).plan, fam, pts).ok


def test_swapped_plan_is_detected():
    pts = diamond_geometry(0.7)
    fam = pairwise_family(riesz(1))
    # Two three-particle blocks that are not the optimal split.
    bad = GCPlan({(1, 1, 1, 0, 0, 0): 0.5, (0, 0, 0, 1, 1, 1): 0.5}, nmax=6)
    rep = B.check_c_monotonicity(bad, fam, pts)
    assert not rep.ok and rep.worst_deficit > 0 and rep.violations


def test_vacuum_block_is_never_optimal():
    pts = np.array([[0.0], [1.0]])
    fam = pairwise_family(coulomb())
    plan = GCPlan({(0, 0): 0.5, (1, 1): 0.5}, nmax=2)
    rep = B.check_c_monotonicity(plan, fam, pts)
    assert not rep.ok
    assert any(v.deficit == pytest.approx(1.0) for v in rep.violations)


def test_sampled_splits_are_reproducible():
    pts = np.arange(8, dtype=float).reshape(-1, 1)
    fam = pairwise_family(riesz(1))
    plan = GCPlan({(1,) * 8: 0.5, (0,) * 8: 0.5}, nmax=8)
    a = B.check_c_monotonicity(plan, fam, pts, split_cap=4, split_samples=64, seed=7)
    b = B.check_c_monotonicity(plan, fam, pts, split_cap=4, split_samples=64, seed=7)
    assert a == b and a.splits_checked == 64 * 2


@settings(max_examples=25)
@given(st.integers(0, 10**6), st.floats(1.05, 4.0))
def test_lp_support_inside_coulomb_bound(seed, mass):
    rng = np.random.default_rng(seed)
    m = 7
    pts = rng.random((m, 2))
    D = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    if D[np.triu_indices(m, 1)].min() < 0.1:
        return
    w = rng.random(m) + 0.1
    masses = w / w.sum() * mass
    if masses.max() > 1:
        return
    rho = DiscreteDensity(pts, masses)
    sol = lp.solve(rho, m, pairwise_family(coulomb()))
    assert B.bound_coulomb(mass).contains(sol.support)
