import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from gcot import lp
from gcot.core import DiscreteDensity, GCPlan, plan_density
from gcot.costs import constant, coulomb, exponential, harmonic, pairwise_family, riesz


def _highs(rho, nmax, fam):
    inst = lp.build_instance(rho, nmax, fam)
    A = np.vstack([inst.occ_array.T, np.ones(inst.n_variables)])
    b = np.concatenate([rho.masses, [1.0]])
    return linprog(inst.costs, A_eq=A, b_eq=b, bounds=(0, None), method="highs").fun


def _const_closed_form(M):
    t = M - math.floor(M)
    return M * (M - 1) / 2 - t * (t - 1) / 2


def test_enumeration_examples(diamond):
    coul = pairwise_family(coulomb())
    two = DiscreteDensity([[0.0], [1.0]], [0.5, 0.5])
    assert lp.enumerate_configurations(two, 1, coul) == [(0, 0), (1, 0), (0, 1)]
    assert len(lp.enumerate_configurations(diamond, 6, coul)) == 64
    assert lp.enumerate_configurations(diamond, 0, coul) == [(0,) * 6]


@pytest.mark.parametrize("masses", [(1, 1), (1, 1, 0.5), (1, 1, 1), (1, 1, 1, 0.7)])
def test_constant_cost_closed_form(masses):
    rho = DiscreteDensity(np.arange(len(masses), dtype=float), masses)
    fam = pairwise_family(constant(1))
    M = rho.total_mass
    sol = lp.solve(rho, math.ceil(M) + 1, fam)
    assert sol.value == pytest.approx(_const_closed_form(M), abs=1e-9)
    n = math.floor(M)
    assert set(sol.support) <= {n, n + 1}
    assert sol.certificate.is_valid()


def test_coulomb_mass_two(unit_pair):
    val, plan = lp.solve_primal(unit_pair, 4, pairwise_family(coulomb()))
    assert val == pytest.approx(1.0, abs=1e-12)
    assert plan.support() == [2]


def test_at_most_one_agent_is_exact():
    rho = DiscreteDensity([[0.0], [1.0], [3.0]], [0.1, 0.2, 0.1])
    sol = lp.solve(rho, 3, pairwise_family(exponential()))
    assert sol.value == 0.0
    assert sol.plan.weights[(0, 0, 0)] == pytest.approx(0.6, abs=1e-15)
    for i, mass in enumerate(rho.masses):
        occ = tuple(int(j == i) for j in range(3))
        assert sol.plan.weights[occ] == pytest.approx(mass, abs=1e-15)


def test_dual_examples(diamond):
    rho = DiscreteDensity(np.arange(3, dtype=float), [1, 1, 1])
    cert = lp.solve_dual(rho, 4, pairwise_family(constant(1)))
    assert cert.primal == pytest.approx(3) and abs(cert.gap) <= 1e-8
    zero = lp.solve(rho, 4, pairwise_family(constant(0)))
    assert zero.value == 0 and zero.certificate.beta == 0 and np.all(zero.certificate.phi == 0)
    cert = lp.solve_dual(diamond, 6, pairwise_family(riesz(1)))
    assert abs(cert.gap) <= 1e-8 and cert.max_violation <= 1e-9


def test_canonical_examples(diamond):
    rho = DiscreteDensity(np.arange(3, dtype=float), [1, 1, 1])
    assert lp.solve_canonical(rho, 3, pairwise_family(constant(1)))[0] == pytest.approx(3)
    one = DiscreteDensity(np.arange(3, dtype=float), [0.2, 0.5, 0.3])
    assert lp.solve_canonical(one, 1, pairwise_family(riesz(1)))[0] == 0
    fam = pairwise_family(riesz(1))
    c3 = lp.solve_canonical(diamond, 3, fam)[0]
    c = lp.solve(diamond, 6, fam).value
    assert c3 > c + 1e-6
    with pytest.raises(lp.InfeasibleError):
        lp.solve_canonical(diamond, 2, fam)


def test_truncation_sweep(unit_pair):
    res = lp.truncation_sweep(unit_pair, pairwise_family(coulomb()), 2, 5)
    assert res.nonincreasing and len({round(v, 12) for _, v in res.values}) == 1
    rho = DiscreteDensity(np.arange(3, dtype=float), [1, 1, 0.5])
    res = lp.truncation_sweep(rho, pairwise_family(constant(1)), 3, 6)
    assert res.nonincreasing and res.stabilized_at == 4


def test_convex_hull_check(diamond, unit_pair):
    fam = pairwise_family(riesz(1))
    sol = lp.solve(diamond, 6, fam)
    rep = lp.convex_hull_check(sol.plan, fam, diamond)
    assert rep.ok and [b.n for b in rep.blocks] == [2, 4]
    coul = pairwise_family(coulomb())
    rep = lp.convex_hull_check(lp.solve(unit_pair, 3, coul).plan, coul, unit_pair)
    assert rep.ok and len(rep.blocks) == 1
    small = DiscreteDensity([[0.0], [1.0]], [0.1, 0.3])
    rep = lp.convex_hull_check(lp.solve(small, 2, coul).plan, coul, small)
    assert rep.ok and rep.blocks[-1].block_cost == 0


def test_infeasibility_and_caps(unit_pair):
    coul = pairwise_family(coulomb())
    with pytest.raises(lp.InfeasibleError) as exc:
        lp.solve(unit_pair, 1, coul)
    assert exc.value.row == "mass"
    heavy = DiscreteDensity([[0.0], [1.0]], [1.5, 0.5])
    with pytest.raises(lp.InfeasibleError) as exc:
        lp.solve(heavy, 4, coul)
    assert exc.value.row == 0
    with pytest.raises(lp.SizeCapExceeded):
        lp.solve(unit_pair, 4, pairwise_family(constant(1)), cap=3)


def test_exact_mode_matches_float(diamond):
    fam = pairwise_family(constant(1))
    rho = DiscreteDensity(np.arange(3, dtype=float), [1, 1, 0.5])
    fl = lp.solve(rho, 4, fam)
    ex = lp.solve(rho, 4, fam, exact=True)
    assert ex.exact_value == "2"
    assert abs(fl.value - ex.value) <= 1e-9
    d = lp.solve(diamond, 6, pairwise_family(riesz(1)), exact=True)
    assert d.value == pytest.approx(1.9389239907725524, abs=1e-9)


def _random_density(seed, m, mass):
    rng = np.random.default_rng(seed)
    pts = rng.random((m, 2))
    w = rng.random(m) + 0.2
    return DiscreteDensity(pts, w / w.sum() * mass)


@settings(max_examples=30)
@given(st.integers(0, 10**6), st.integers(2, 4), st.floats(0.5, 3.0))
def test_random_instances_against_highs(seed, m, mass):
    rho = _random_density(seed, m, mass)
    fam = pairwise_family(exponential(1.0))
    nmax = math.ceil(mass) + 1
    sol = lp.solve(rho, nmax, fam)
    assert sol.value == pytest.approx(_highs(rho, nmax, fam), abs=1e-8)
    assert abs(sol.certificate.gap) <= 1e-8
    assert np.allclose(plan_density(sol.plan), rho.masses, atol=1e-9)
    st_a, st_b = fam.stability
    assert sol.value >= -st_a - st_b * mass - 1e-12


@settings(max_examples=20)
@given(st.integers(0, 10**6), st.floats(0.1, 0.9))
def test_subadditivity_and_convexity(seed, t):
    rng = np.random.default_rng(seed)
    pts = rng.random((3, 1)) * 3
    while np.min(np.diff(np.sort(pts[:, 0]))) < 1e-3:
        pts = rng.random((3, 1)) * 3
    c2 = exponential(0.8)
    fam = pairwise_family(c2)
    m1 = rng.random(3) * 0.8
    m2 = rng.random(3) * 0.8
    r1, r2 = DiscreteDensity(pts, m1), DiscreteDensity(pts, m2)
    rs = DiscreteDensity(pts, m1 + m2)
    N = 6
    cross = float(m1 @ c2.matrix(pts) @ m2)
    v1, v2, vs = (lp.solve(r, N, fam).value for r in (r1, r2, rs))
    assert vs <= v1 + v2 + cross + 1e-9
    mix = DiscreteDensity(pts, t * m1 + (1 - t) * m2)
    assert lp.solve(mix, N, fam).value <= t * v1 + (1 - t) * v2 + 1e-9


def test_unstable_harmonic_still_solves():
    rho = DiscreteDensity([[0.0], [1.0]], [1.0, 1.0])
    sol = lp.solve(rho, 4, pairwise_family(harmonic(-1)))
    assert sol.value == pytest.approx(_highs(rho, 4, pairwise_family(harmonic(-1))), abs=1e-9)
