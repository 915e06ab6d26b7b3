import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from gcot import entropic as E
from gcot import lp
from gcot.core import DiscreteDensity, GCPlan, iter_occupations, plan_density, poisson_plan, vacuum_plan
from gcot.costs import constant, coulomb, exponential, harmonic, pairwise_family, riesz

ZERO = pairwise_family(constant(0.0))


def _random_plan(seed, m=2, nmax=3, mass_cap=3.0):
    rng = np.random.default_rng(seed)
    occs = list(iter_occupations(m, nmax))
    w = rng.random(len(occs)) * (rng.random(len(occs)) < 0.7)
    w[0] += 1e-3
    plan = GCPlan(dict(zip(occs, w / w.sum())), nmax=nmax, m=m)
    dens = plan_density(plan)
    if dens.sum() > mass_cap or np.any(dens <= 0):
        return None, None
    return plan, DiscreteDensity(np.arange(m, dtype=float), dens)


def test_relative_entropy_basics():
    rho = DiscreteDensity([[0.0]], [0.8])
    ref, _ = poisson_plan(rho, 5)
    assert E.relative_entropy(ref, ref) == 0.0
    vac = vacuum_plan(1, 5)
    assert E.relative_entropy(vac, ref) == pytest.approx(-math.log(ref.weights[(0,)]))
    renorm = sum(0.8 ** n / math.factorial(n) for n in range(6))
    assert E.relative_entropy(vac, ref) == pytest.approx(math.log(renorm), abs=1e-14)
    assert E.relative_entropy(GCPlan({(6,): 1.0}, nmax=6), ref) == math.inf


@settings(max_examples=60)
@given(st.integers(0, 10**6))
def test_pinsker_on_random_plans(seed):
    rng = np.random.default_rng(seed)
    rho = DiscreteDensity([[0.0], [1.0]], rng.random(2) + 0.1)
    ref, _ = poisson_plan(rho, 4)
    w = rng.random(len(ref)) ** 3
    plan = GCPlan(dict(zip(ref.weights, w / w.sum())), nmax=4)
    H = E.relative_entropy(plan, ref)
    tv = sum(abs(plan.weights.get(o, 0.0) - g) for o, g in ref)
    assert H >= 0 and tv <= math.sqrt(2 * H) + 1e-12


def test_growth_check_examples():
    rho = DiscreteDensity([[0.0], [1.0]], [0.6, 0.9])
    plan, tail = poisson_plan(rho, 20)
    assert tail < 1e-10
    rep = E.entropy_report(plan, rho)
    assert rep.H == pytest.approx(0.0, abs=1e-9)
    assert E.entropy_growth_check(plan, rho)
    empty = DiscreteDensity([[0.0]], [0.0])
    assert E.entropy_report(vacuum_plan(1), empty).H == 0.0
    assert E.entropy_growth_check(vacuum_plan(1), empty)


@settings(max_examples=200)
@given(st.integers(0, 10**6))
def test_entropy_identities_on_random_plans(seed):
    plan, rho = _random_plan(seed)
    if plan is None:
        return
    assert E.entropy_growth_check(plan, rho)
    S, decomposed, top = E.max_entropy_terms(plan, rho)
    assert abs(S - decomposed) <= 1e-10
    assert E.max_entropy_check(plan, rho)
    assert S < top


def test_max_entropy_attained_by_poisson():
    rho = DiscreteDensity([[0.0], [1.0]], [0.3, 0.5])
    plan, tail = poisson_plan(rho, 14)
    S, _, top = E.max_entropy_terms(plan, rho)
    assert S == pytest.approx(top, abs=1e-9)


def test_partition_function_bounds():
    rho = DiscreteDensity([[0.0], [1.0]], [0.4, 0.7])
    Z = E.partition_function(rho, 20, ZERO, [0.0, 0.0], 1.0)
    assert Z == pytest.approx(1.0, abs=1e-12)
    fam = pairwise_family(exponential(1.0))
    rng = np.random.default_rng(0)
    for _ in range(20):
        psi = rng.normal(size=2)
        T = float(rng.uniform(0.2, 3))
        Z = E.partition_function(rho, 8, fam, psi, T)
        assert Z >= math.exp(-0.0 / T - rho.total_mass)
        assert Z <= math.exp(-rho.total_mass + float(np.exp(psi / T) @ rho.masses)) + 1e-12


def test_partition_function_is_log_safe():
    rho = DiscreteDensity([[0.0], [1.0]], [0.4, 0.7])
    lz = E.log_partition_function(rho, 4, ZERO, [50.0, 50.0], 1e-3)
    assert math.isfinite(lz) and lz > 1e4
    assert E.partition_function(rho, 4, ZERO, [50.0, 50.0], 1e-3) == math.inf


def test_gibbs_plan_zero_cost_is_truncated_poisson():
    rho = DiscreteDensity([[0.0], [1.0]], [0.4, 0.7])
    sol = E.gibbs_plan(rho, 5, ZERO, [0.0, 0.0], 0.3)
    ref, _ = poisson_plan(rho, 5)
    for o, g in ref:
        assert sol.plan.weights[o] == pytest.approx(g, abs=1e-14)
    assert sol.Z > 0


def test_gibbs_plan_hot_limit():
    rho = DiscreteDensity([[0.0], [1.0]], [0.4, 0.7])
    fam = pairwise_family(exponential(1.0))
    ref, _ = poisson_plan(rho, 5)
    tv = [sum(abs(E.gibbs_plan(rho, 5, fam, [0, 0], T).plan.weights[o] - g) for o, g in ref)
          for T in (1.0, 10.0, 100.0)]
    assert tv[0] > tv[1] > tv[2] and tv[2] < 1e-2


def test_small_temperature_concentrates_on_lp_optimum():
    rho = DiscreteDensity([[0.0], [1.0], [2.0], [3.0]], [0.5] * 4)
    fam = pairwise_family(coulomb())
    sol = lp.solve(rho, 4, fam)
    ent = E.solve_entropic(rho, 4, fam, 1e-3)
    on_support = sum(ent.plan.weights.get(o, 0.0) for o in sol.plan.weights)
    assert on_support > 0.99
    assert 0 <= ent.primal_value - sol.value <= 1e-3 * E.poisson_relative_entropy(sol.plan, rho) + 1e-9


def test_zero_cost_solution_is_poisson():
    rho = DiscreteDensity([[0.0], [1.0]], [0.4, 0.7])
    for T in (0.1, 1.0):
        sol = E.solve_entropic(rho, 14, ZERO, T)
        assert np.allclose(sol.psi, 0.0, atol=1e-8)
        assert abs(sol.entropy) < 1e-10 and abs(sol.primal_value) < 1e-10


def test_single_site_constant_cost_matches_scalar_root():
    rho = DiscreteDensity([[0.0]], [0.5])
    fam = pairwise_family(constant(1.0))
    T, nmax = 0.5, 8
    k = np.arange(nmax + 1)
    logg = -0.5 + k * math.log(0.5) - np.array([math.lgamma(v + 1) for v in k])
    cost = k * (k - 1) / 2

    def density(psi):
        lw = logg + (-cost + k * psi) / T
        w = np.exp(lw - lw.max())
        return float(k @ w / w.sum()) - 0.5

    psi_ref = brentq(density, -20, 20, xtol=1e-14)
    sol = E.solve_entropic(rho, nmax, fam, T, tol=1e-12)
    assert sol.psi[0] == pytest.approx(psi_ref, abs=1e-9)


def test_primal_dual_agree(diamond):
    fam = pairwise_family(riesz(1))
    for T in (1.0, 0.1, 0.01):
        sol = E.solve_entropic(diamond, 6, fam, T)
        assert sol.density_residual <= 1e-8
        assert abs(sol.primal_value - sol.dual_value(diamond)) <= 1e-7


def test_methods_agree(diamond):
    fam = pairwise_family(riesz(1))
    a = E.solve_entropic(diamond, 6, fam, 0.5, tol=1e-11, method="fixed-point")
    b = E.solve_entropic(diamond, 6, fam, 0.5, tol=1e-11, method="newton")
    assert a.primal_value == pytest.approx(b.primal_value, abs=1e-8)


def test_errors(unit_pair, diamond):
    fam = pairwise_family(coulomb())
    with pytest.raises(lp.InfeasibleError):
        E.solve_entropic(unit_pair, 4, fam, 0.1)
    with pytest.raises(lp.InfeasibleError):
        E.solve_entropic(diamond, 3, fam, 0.1)
    with pytest.raises(lp.NonConvergence):
        E.solve_entropic(diamond, 6, fam, 0.01, max_iter=2, method="fixed-point")
    with pytest.raises(ValueError):
        E.solve_entropic(diamond, 6, fam, 0.0)


def test_feasibility_probe_and_critical_scaling(diamond):
    fam = pairwise_family(riesz(1))
    assert E.feasibility_probe(diamond, 6, fam, 0.5)
    assert not E.feasibility_probe(DiscreteDensity(diamond.points, np.full(6, 0.9995)), 6, fam, 0.5)
    s = E.critical_scaling(diamond, 6, fam, 0.5, upper=4.0, steps=20)
    assert s == pytest.approx(2.0, abs=1e-4)


def test_dual_gradient_finite_differences(diamond):
    fam = pairwise_family(riesz(1))
    T = 0.3
    rng = np.random.default_rng(5)
    psi = rng.normal(size=6)

    def G(p):
        return float(p @ diamond.masses) - T * E.log_partition_function(diamond, 6, fam, p, T)

    sol = E.gibbs_plan(diamond, 6, fam, psi, T)
    grad = diamond.masses - plan_density(sol.plan)
    h = 1e-5
    fd = np.array([(G(psi + h * e) - G(psi - h * e)) / (2 * h) for e in np.eye(6)])
    assert np.max(np.abs(fd - grad)) / np.max(np.abs(grad)) <= 1e-5


def test_gibbs_self_consistency(diamond):
    fam = pairwise_family(riesz(1))
    bound = fam.bind(diamond.points)
    T = 0.4
    rng = np.random.default_rng(2)
    for _ in range(5):
        psi = rng.normal(size=6)
        sol = E.gibbs_plan(diamond, 6, fam, psi, T)
        occ, w = sol.plan.occupation_array()

        def functional(o, wt):
            dens = wt @ o
            cost = float(wt @ bound.batch(o))
            H = E.poisson_relative_entropy(GCPlan(dict(zip(map(tuple, o), wt)), nmax=6, m=6), diamond)
            return cost - float(psi @ dens) + T * H

        assert functional(occ, w) == pytest.approx(sol.free_energy, abs=1e-9)
        other = rng.random(len(w))
        assert functional(occ, other / other.sum()) >= sol.free_energy - 1e-12


def test_sweep_properties(diamond):
    fam = pairwise_family(riesz(1))
    Ts = list(np.geomspace(0.01, 10, 10))
    table = E.temperature_sweep(diamond, 6, fam, Ts)
    assert table.nondecreasing and table.concave
    assert all(r.pinsker_ok for r in table.rows)
    C = lp.solve(diamond, 6, fam).value
    opt = lp.solve(diamond, 6, fam).plan
    H_star = E.poisson_relative_entropy(opt, diamond)
    r0 = table.rows[0]
    assert 0 <= r0.F - C <= r0.T * H_star + 1e-9
    assert [r.T for r in table.rows] == sorted(Ts)


def test_hot_sweep_approaches_poisson_cost():
    rho = DiscreteDensity([[0.0], [1.0]], [0.4, 0.3])
    fam = pairwise_family(exponential(1.0))
    ref, tail = poisson_plan(rho, 10)
    bound = fam.bind(rho.points)
    poisson_cost = sum(w * bound(o) for o, w in ref)
    table = E.temperature_sweep(rho, 10, fam, [1.0, 10.0, 100.0, 1000.0])
    gaps = [abs(r.F - poisson_cost) for r in table.rows]
    assert gaps[-1] < 1e-3 and gaps[-1] < gaps[0]
    tvs = [r.tv for r in table.rows]
    assert all(b <= a for a, b in zip(tvs, tvs[1:]))


def test_two_agent_distribution(diamond):
    R = E.two_agent_distribution(GCPlan({(1, 1): 1.0}, nmax=2))
    assert R.tolist() == [[0.0, 1.0], [0.0, 0.0]]
    rho = DiscreteDensity([[0.0], [1.0]], [0.3, 0.2])
    plan, tail = poisson_plan(rho, 14)
    R = E.two_agent_distribution(plan)
    assert R[0, 1] == pytest.approx(0.06, abs=1e-10)
    assert R[0, 0] == pytest.approx(0.045, abs=1e-10)
    fam = pairwise_family(riesz(1))
    sol = lp.solve(diamond, 6, fam)
    R = E.two_agent_distribution(sol.plan)
    assert R[0, 1] == pytest.approx(0.5)
    for i in range(2, 6):
        for j in range(i + 1, 6):
            assert R[i, j] == pytest.approx(0.5)
    K = fam.bind(diamond.points).pair_matrix
    assert E.pair_cost_from_distribution(R, K) == pytest.approx(sol.value, abs=1e-12)


def test_block_approximation_identity_for_fine_cells():
    pts = np.array([[0.0], [1.0], [2.5]])
    plan = GCPlan({(1, 0, 1): 0.4, (0, 1, 0): 0.3, (0, 0, 0): 0.3}, nmax=2)
    res = E.block_approximation(plan, pts, 0.5, pairwise_family(exponential()))
    assert res.plan.weights.keys() == plan.weights.keys()
    assert all(math.isclose(res.plan.weights[o], w) for o, w in plan)
    assert res.cost_gap == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=25)
@given(st.integers(0, 10**6), st.floats(0.15, 0.6))
def test_block_approximation_properties(seed, h):
    rng = np.random.default_rng(seed)
    pts = np.sort(rng.random(5)).reshape(-1, 1) * 2
    if np.min(np.diff(pts[:, 0])) < 1e-3:
        return
    occs = [o for o in iter_occupations(5, 3)]
    w = rng.random(len(occs)) * (rng.random(len(occs)) < 0.3)
    if w.sum() == 0:
        return
    plan = GCPlan(dict(zip(occs, w / w.sum())), nmax=3, m=5)
    c2 = exponential(1.5)
    res = E.block_approximation(plan, pts, h, pairwise_family(c2))
    assert np.allclose(plan_density(res.plan), plan_density(plan), atol=1e-12)
    assert res.plan.total_weight == pytest.approx(1.0, abs=1e-12)
    assert res.cost_gap <= res.gap_bound + 1e-12
    R = E.two_agent_distribution(plan)
    modulus = 2 * (1 - math.exp(-1.5 * 2 * h))  # oscillation of c2 over pairs of cells of side h
    assert res.gap_bound <= 2 * R.sum() * modulus + 1e-12
    assert math.isfinite(res.relative_entropy)


def test_block_approximation_harmonic_gap_shrinks():
    x = np.linspace(0, 1, 9).reshape(-1, 1)
    rho = DiscreteDensity(x, np.full(9, 2.0 / 9))
    fam = pairwise_family(harmonic(1.0))
    plan = lp.solve(rho, 3, fam).plan
    gaps = [E.block_approximation(plan, x, h, fam).cost_gap for h in (0.5, 0.26, 0.13)]
    assert gaps[-1] <= gaps[0] + 1e-12


def test_cold_gap_is_temperature_times_entropy_of_lp_optimum(diamond):
    # The LP optimum puts weight 1/2 on one 2-particle and one 4-particle
    # configuration; its entropy against the Poisson state is 3 + 2 log 2.
    fam = pairwise_family(riesz(1))
    c = lp.solve(diamond, 6, fam).value
    for T in (1e-3, 5e-4):
        sol = E.solve_entropic(diamond, 6, fam, T)
        assert sol.dual_value(diamond) - c == pytest.approx(T * (3 + 2 * math.log(2)), rel=1e-3)
