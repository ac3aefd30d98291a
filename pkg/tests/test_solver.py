import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cipcontract.domain import BeliefMatrix, Scenario, TypeLadder, objective_coefficients
from cipcontract.experiments import default_scenario, random_scenario
from cipcontract.feasibility import build_relaxed_constraints, check_ic_full, check_ir, check_monotonicity
from cipcontract.solver import (INFEASIBLE, IR_UNSATISFIABLE, brute_force_oracle, equal_allocation,
                                lipschitz_bound, solve_optimal, solve_two_ci)

from conftest import make_scenario


# --- closed form -----------------------------------------------------------------

def test_two_ci_closed_form(two_ci):
    res = solve_two_ci(two_ci)
    assert res.optimal and res.method == "closed_form"
    assert res.menu.t_by_ci().tolist() == [20.0, 480.0]
    assert [e.reward for e in res.menu.entries] == [60.0, 2880.0]


def test_two_ci_insufficient_budget():
    sc = make_scenario([(0, 0), (0, 1)], t_min=(300.0, 300.0, 300.0))
    res = solve_two_ci(sc)
    assert res.status == INFEASIBLE and res.menu is None
    assert "insufficient budget" in res.reason


def test_two_ci_boundary_budget_same_w_level():
    sc = make_scenario([(0, 0), (0, 1)], t_min=(250.0, 250.0, 250.0))
    res = solve_two_ci(sc)
    assert res.optimal
    assert res.menu.t_by_ci().tolist() == [250.0, 250.0]


def test_two_ci_boundary_budget_across_w_levels_breaks_dlic():
    # equal allocations across w levels make the higher type prefer the cheaper entry
    sc = make_scenario([(0, 0), (1, 0)], t_min=(250.0, 250.0, 250.0))
    res = solve_two_ci(sc)
    assert not res.optimal
    assert "DLIC(1)" in res.reason
    assert not solve_optimal(sc).optimal


def test_two_ci_reports_binding_upward_constraint():
    # s_0 - beta*r_1 > 0: the low type would take a large high entry
    sc = make_scenario([(0, 0), (1, 0)], beta=0.1)
    res = solve_two_ci(sc)
    assert not res.optimal and "ULIC(0)" in res.reason
    lp = solve_optimal(sc)
    assert lp.optimal
    ulic = build_relaxed_constraints(sc).get("ULIC(0)")
    assert ulic.coeffs @ lp.menu.t == pytest.approx(0.0, abs=1e-9)


def test_two_ci_needs_two():
    with pytest.raises(ValueError):
        solve_two_ci(make_scenario([(0, 0)]))


def test_two_ci_input_order_irrelevant():
    res = solve_two_ci(make_scenario([(1, 0), (0, 0)]))
    assert res.menu.t_by_ci().tolist() == [480.0, 20.0]


def test_two_ci_stationarity_equations(two_ci):
    res = solve_two_ci(two_ci)
    d = res.diagnostics
    lad, beta, v = two_ci.ladder, two_ci.beta, two_ci.v
    c = objective_coefficients(two_ci.beliefs, lad)
    s1, r1 = lad.theta_levels[0] * lad.w_levels[0] * v, lad.reward_rates[0]
    s2, r2 = lad.theta_levels[0] * lad.w_levels[1] * v, lad.reward_rates[1]
    mu = d.multipliers
    lam = d.budget
    assert mu["ULIC(0)"] == pytest.approx(0.0, abs=1e-9)
    eq1 = c[0] + mu["IR(0)"] * (s1 - beta * r1) + mu["DLIC(1)"] * (beta * r1 - s2) + mu["MIN(0)"] - lam
    eq2 = c[1] + mu["DLIC(1)"] * (s2 - beta * r2) + mu["MIN(1)"] - lam
    assert abs(eq1) <= 1e-6 and abs(eq2) <= 1e-6
    # only MIN(0) binds at (20, 480): lambda = c_2 and mu_MIN(0) = c_2 - c_1
    assert lam == pytest.approx(c[1])
    assert mu["MIN(0)"] == pytest.approx(c[1] - c[0])
    t = res.menu.t
    slack_dlic = (s2 - beta * r2) * t[1] - (s2 - beta * r1) * t[0]
    cs = [mu["IR(0)"] * (s1 - beta * r1) * t[0], mu["DLIC(1)"] * slack_dlic,
          mu["MIN(0)"] * (t[0] - 20), mu["MIN(1)"] * (t[1] - 60)]
    assert max(abs(x) for x in cs) <= 1e-6
    assert all(m >= -1e-9 for m in mu.values())
    assert d.complementary_slackness_residual <= 1e-6


# --- general LP -----------------------------------------------------------------

def test_lp_matches_closed_form(two_ci):
    a, b = solve_two_ci(two_ci), solve_optimal(two_ci)
    np.testing.assert_allclose(a.menu.t_by_ci(), b.menu.t_by_ci(), atol=1e-9)
    assert a.objective == pytest.approx(b.objective)


def test_lp_three_ascending_point_mass():
    sc = make_scenario([(0, 0), (1, 0), (2, 0)])
    res = solve_optimal(sc)
    assert res.optimal
    t = res.menu.t_by_ci()
    assert t[0] == pytest.approx(20.0)
    assert t.sum() == pytest.approx(500.0, abs=1e-9)
    oracle = brute_force_oracle(sc, 1.0)
    assert oracle.objective - 1e-6 <= res.objective <= oracle.objective + lipschitz_bound(sc)
    assert check_monotonicity(res.menu, sc.ladder, sc.beta, sc.v).satisfied


def test_lp_single_ci():
    sc = make_scenario([(1, 2)], t_max=75.0)
    res = solve_optimal(sc)
    assert res.optimal and res.menu.t.tolist() == [75.0]
    assert not solve_optimal(sc.replace(t_max=59.0)).optimal


def test_lp_insufficient_budget_reason():
    res = solve_optimal(make_scenario([(0, 0), (1, 0), (2, 0)], t_max=150.0))
    assert res.status == INFEASIBLE and "insufficient budget" in res.reason


def test_lp_ir_unsatisfiable_reason():
    # theta*w*v = 1 < beta*r = 2.7 for the lowest type
    res = solve_optimal(make_scenario([(0, 0), (1, 0)], beta=0.9, v=1.0))
    assert res.status == INFEASIBLE and res.reason == IR_UNSATISFIABLE


def test_lp_permutation_equivariant():
    sc = default_scenario(5, seed=3)
    base = solve_optimal(sc).menu.t_by_ci()
    perm = [3, 0, 4, 1, 2]
    shuffled = solve_optimal(sc.subset(perm)).menu.t_by_ci()
    np.testing.assert_allclose(shuffled, base[perm], atol=1e-9)


def test_lp_degenerate_objective_picks_lexicographic_minimum():
    # w*(r-1) = -0.5 on both levels and identical theta beliefs: every feasible T ties
    lad = TypeLadder((1.0, 2.0), (1.0, 2.0), (0.5, 0.75), (0.0, 0.0))
    beliefs = BeliefMatrix([[1, 0], [0, 1]], [[1, 0], [1, 0]])
    sc = Scenario(lad, beliefs, ((0, 0), (1, 0)), 100.0, 0.5, 2.0)
    c = objective_coefficients(beliefs, lad)
    assert c[0] == c[1]
    res = solve_optimal(sc)
    # smallest T_0 allowed: ULIC(0) binds, (s0 - b r0) T0 = (s0 - b r1) (100 - T0)
    s0, b = 2.0, 0.5
    lo, hi = s0 - b * 0.5, s0 - b * 0.75
    t0 = 100.0 * hi / (lo + hi)
    np.testing.assert_allclose(res.menu.t_by_ci(), [t0, 100.0 - t0], atol=1e-7)


def test_lp_default_instance_properties():
    sc = default_scenario(3)
    res = solve_optimal(sc)
    assert res.optimal
    assert check_ic_full(res.menu, sc.ladder, sc.beta, sc.v).satisfied


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6))
def test_lp_result_invariants(seed, n):
    sc = random_scenario(np.random.default_rng(seed), n, max_spare=300.0, integer_budget=False)
    res = solve_optimal(sc)
    if not res.optimal:
        assert res.menu is None and res.reason
        return
    t = res.menu.t
    order = [e.ci for e in res.menu.entries]
    cons = build_relaxed_constraints(sc.subset(order))
    assert cons.evaluate(t).satisfied
    assert abs(t.sum() - sc.t_max) <= 1e-9
    assert check_monotonicity(res.menu, sc.ladder, sc.beta, sc.v).satisfied
    assert check_ic_full(res.menu, sc.ladder, sc.beta, sc.v).satisfied
    d = res.diagnostics
    assert min(d.multipliers.values()) >= -1e-9
    c = objective_coefficients(sc.beliefs, sc.ladder)
    assert d.stationarity_residual <= 1e-6 * max(1.0, float(np.abs(c).max()))
    assert d.complementary_slackness_residual <= 1e-6 * max(1.0, sc.t_max)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 3))
def test_lp_dominates_grid_oracle(seed, n):
    # every grid point is LP-feasible, so the LP can never do worse; how much
    # better it does depends on how thin the feasible set is around the optimum
    sc = random_scenario(np.random.default_rng(seed), n, max_spare=60.0)
    lp, grid = solve_optimal(sc), brute_force_oracle(sc, 1.0)
    if grid.optimal:
        assert lp.optimal
        assert lp.objective >= grid.objective - 1e-6


def test_thin_feasible_set_defeats_grid_bound():
    # T_2 / T_1 is pinned to a narrow window, so near the optimum no unit-grid
    # point fits and the best grid point sits far away; finer grids recover
    sc = Scenario.from_dict(json.loads((Path(__file__).parent / "data" / "thin_cone.json").read_text()))
    lp = solve_optimal(sc)
    L = lipschitz_bound(sc)
    assert lp.objective > brute_force_oracle(sc, 1.0).objective + 5 * L
    assert lp.objective <= brute_force_oracle(sc, 0.25).objective + 0.25 * L
    assert check_ic_full(lp.menu, sc.ladder, sc.beta, sc.v).satisfied
    assert check_ir(lp.menu, sc.ladder, sc.beta, sc.v).satisfied


# --- oracle ---------------------------------------------------------------------

def test_oracle_two_ci(two_ci):
    res = brute_force_oracle(two_ci, 1.0)
    assert res.optimal and res.method == "oracle"
    assert res.menu.t_by_ci().tolist() == [20.0, 480.0]


def test_oracle_single_point():
    res = brute_force_oracle(make_scenario([(0, 0)], t_max=500.0), 500.0)
    assert res.menu.t.tolist() == [500.0]


def test_oracle_empty_grid():
    res = brute_force_oracle(make_scenario([(1, 0), (2, 0)], t_max=100.0), 1.0)
    assert res.status == INFEASIBLE


def test_oracle_rejects_huge_grid():
    sc = make_scenario([(0, 0), (0, 1), (1, 0), (1, 1), (2, 0)], t_max=5000.0)
    with pytest.raises(ValueError):
        brute_force_oracle(sc, 0.01)
    with pytest.raises(ValueError):
        brute_force_oracle(sc, 0.0)


def test_oracle_refines_with_step():
    sc = make_scenario([(0, 0), (1, 1), (2, 3)], t_max=330.0)
    lp = solve_optimal(sc)
    L = lipschitz_bound(sc)
    for step in (10.0, 2.0, 0.5):
        grid = brute_force_oracle(sc, step)
        assert grid.objective - 1e-6 <= lp.objective <= grid.objective + L * step


# --- baseline ----------------------------------------------------------------------

@pytest.mark.parametrize("n,t_max,each", [(4, 500.0, 125.0), (1, 500.0, 500.0), (3, 500.0, 500.0 / 3)])
def test_equal_allocation(n, t_max, each):
    sc = make_scenario([(min(i, 2), 0) for i in range(n)], t_max=t_max)
    menu = equal_allocation(sc)
    assert np.all(menu.t == each)
    for e in menu.entries:
        assert e.reward == sc.ladder.reward_rates[e.w_index] * each
