import json

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from pvdr.dispatch import (Curtailment, DispatchProblem, FleetInputs, InfeasibleError,
                           SolverLimitError, apply_shedding, build_problem, check_feasible,
                           round_robin, solve, solve_bnb, solve_exact, solve_flow,
                           solve_heuristic)
from pvdr.dispatch.problem import (SHED_COST, finalize, problem_from_dict, problem_to_dict,
                                   solution_from_dict, solution_to_dict)
from helpers import random_problem
from oracles import brute_force_dispatch, enumerate_oracle, greedy_deadline_cost

seeds = st.integers(0, 2 ** 32 - 1)


def rng_problem(seed, **kw):
    return random_problem(np.random.default_rng(seed), **kw)


def feasible_or_skip(prob):
    ref = enumerate_oracle(prob)
    assume(np.isfinite(ref))
    return ref


# ------------------------------------------------------------------ oracles

@settings(max_examples=12)
@given(seeds, st.booleans(), st.sampled_from([0.0, 0.01, 0.05]))
def test_exact_matches_enumeration_2x12(seed, equal, c_sw):
    prob = rng_problem(seed, n_units=2, n_steps=12, equal=equal, switch_cost=c_sw)
    ref = feasible_or_skip(prob)
    sol = solve_exact(prob)
    assert abs(sol.objective - ref) <= 1e-9 * max(1.0, abs(ref))
    assert check_feasible(prob, sol).passed


@settings(max_examples=20)
@given(seeds)
def test_exact_matches_brute_force_tiny(seed):
    prob = rng_problem(seed, n_units=2, n_steps=4, equal=False, switch_cost=0.02, n_pv=2)
    best, B = brute_force_dispatch(prob)
    assume(np.isfinite(best))
    assert solve_exact(prob).objective == pytest.approx(best, abs=1e-9)
    assert enumerate_oracle(prob) == pytest.approx(best, abs=1e-12)


def test_exact_backends_agree(backend):
    from pvdr.kernels import python_kernels
    for seed in range(6):
        prob = rng_problem(seed, n_units=2, n_steps=10, equal=False, switch_cost=0.01)
        try:
            a = solve_exact(prob, backend=backend)
        except InfeasibleError:
            continue
        b = solve_exact(prob, backend=python_kernels)
        assert np.array_equal(a.B, b.B) and a.objective == b.objective


@settings(max_examples=15)
@given(seeds, st.booleans(), st.sampled_from([0.0, 0.03]), st.booleans())
def test_bnb_matches_exact(seed, equal, c_sw, warm):
    prob = rng_problem(seed, n_units=2, n_steps=10, equal=equal, switch_cost=c_sw)
    ref = feasible_or_skip(prob)
    sol = solve_bnb(prob, gap_tol=1e-9, warm_start=warm)
    assert abs(sol.objective - ref) <= 1e-6 * max(1.0, abs(ref))
    assert sol.lower_bound <= sol.objective + 1e-12
    assert check_feasible(prob, sol).passed


@settings(max_examples=30)
@given(seeds, st.integers(1, 3), st.integers(4, 8))
def test_flow_matches_exact(seed, I, N):
    assume(I * N <= 18)
    prob = rng_problem(seed, n_units=I, n_steps=N, equal=True)
    ref = feasible_or_skip(prob)
    sol = solve_heuristic(prob)
    assert sol.info["method"] == "flow" and sol.status == "optimal"
    assert abs(sol.objective - ref) <= 1e-9 * max(1.0, abs(ref))


@settings(max_examples=25)
@given(seeds, st.booleans(), st.sampled_from([0.005, 0.03, 0.1]))
def test_heuristic_bounds_bracket_optimum(seed, equal, c_sw):
    prob = rng_problem(seed, n_units=2, n_steps=10, equal=equal, switch_cost=c_sw)
    ref = feasible_or_skip(prob)
    sol = solve_heuristic(prob)
    tol = 1e-9 * max(1.0, abs(ref))
    assert sol.objective >= ref - tol
    assert sol.lower_bound <= ref + tol
    assert check_feasible(prob, sol).passed


@settings(max_examples=20)
@given(seeds, st.integers(4, 24))
def test_zero_pv_zero_switch_is_cheapest_deadline_schedule(seed, N):
    rng = np.random.default_rng(seed)
    draws = rng.uniform(0.0, 1.2, (1, N)) * (rng.random((1, N)) < 0.4)
    prob = DispatchProblem(spot=rng.uniform(0.01, 0.2, N), load=rng.uniform(1, 5, N),
                           pv=np.zeros((1, N)), rating=[4.5], draws=draws,
                           soc0=[rng.uniform(0, 3)], soc_max=[1e3],
                           soc_terminal=[rng.uniform(0, 3)], p_min=-10.0, p_max=60.0)
    ref = greedy_deadline_cost(prob)
    assume(np.isfinite(ref))
    for sol in (solve_exact(prob), solve_heuristic(prob)):
        assert sol.objective == pytest.approx(ref, rel=1e-12, abs=1e-12)
        assert sol.shed_energy == 0.0


# ------------------------------------------------------------- feasibility

@settings(max_examples=40)
@given(seeds, st.integers(1, 4), st.booleans(), st.sampled_from([0.0, 0.02]))
def test_solutions_have_zero_residuals(seed, I, equal, c_sw):
    prob = rng_problem(seed, n_units=I, n_steps=24, equal=equal, switch_cost=c_sw, n_pv=2)
    try:
        sol = solve_heuristic(prob)
    except InfeasibleError:
        return
    rep = check_feasible(prob, sol)
    assert rep.passed, str(rep)
    assert np.all(sol.s_on + sol.s_off <= 1)
    assert sol.lower_bound <= sol.objective


def _a_solution(seed=4):
    prob = rng_problem(seed, n_units=2, n_steps=12, switch_cost=0.01)
    return prob, solve_heuristic(prob)


def test_checker_flags_flipped_binary():
    prob, sol = _a_solution()
    sol.B = sol.B.copy()
    sol.B[1, 5] = 1 - sol.B[1, 5]
    rep = check_feasible(prob, sol)
    assert not rep.passed
    names = {(name, idx) for name, idx, _ in rep.violations()}
    assert ("switching", (1, 5)) in names
    assert ("soc_balance", (1, 5)) in names


def test_checker_flags_shed_above_pv():
    prob, sol = _a_solution()
    sol.shed = sol.shed.copy()
    k = int(np.argmax(prob.pv_total))
    sol.shed[0, k] = prob.pv[0, k] + 1.0
    rep = check_feasible(prob, sol)
    assert ("shed_bounds", (0, k)) in {(n, i) for n, i, _ in rep.violations()}
    assert rep.max("shed_bounds") == pytest.approx(1.0)


def test_checker_rejects_wrong_shapes():
    prob, sol = _a_solution()
    sol.B = sol.B[:, :-1]
    with pytest.raises(ValueError):
        check_feasible(prob, sol)


# ---------------------------------------------------------------- examples

def test_flat_price_charges_the_demand():
    # 3 kWh at 4.5 kW in ten-minute steps is four on-steps, wherever they sit
    N, price = 8, 0.07
    prob = DispatchProblem(spot=np.full(N, price), load=np.full(N, 2.0), pv=np.zeros((1, N)),
                           rating=[4.5], draws=np.zeros((1, N)), soc0=[0.0], soc_max=[18.0],
                           soc_terminal=[3.0], p_min=-5.0, p_max=50.0)
    for solver in ("exact", "bnb", "heuristic"):
        sol = solve(prob, solver)
        assert sol.objective == pytest.approx(3.0 * price, abs=1e-12)
        assert sol.B.sum() == 4


def test_full_tank_sheds_the_excess():
    N = 3
    pv = np.array([[0.0, 30.0, 0.0]])
    prob = DispatchProblem(spot=np.full(N, 0.05), load=np.full(N, 5.0), pv=pv, rating=[4.5],
                           draws=np.zeros((1, N)), soc0=[18.0], soc_max=[18.0],
                           soc_terminal=[0.0], p_min=-10.0, p_max=50.0)
    sol = solve_exact(prob)
    assert np.all(sol.B == 0)
    np.testing.assert_allclose(sol.shed[0], [0.0, 15.0, 0.0])
    assert sol.objective == pytest.approx(SHED_COST * 15.0 / 6.0, abs=1e-12)


def test_surplus_goes_to_heating_before_shedding():
    N = 3
    pv = np.array([[0.0, 14.0, 0.0]])
    prob = DispatchProblem(spot=np.full(N, 0.05), load=np.full(N, 5.0), pv=pv, rating=[4.5],
                           draws=np.zeros((1, N)), soc0=[5.0], soc_max=[18.0],
                           soc_terminal=[0.0], p_min=-5.0, p_max=50.0)
    sol = solve_exact(prob)
    assert sol.B[0, 1] == 1 and sol.B.sum() == 1
    assert sol.shed_energy == 0.0


@pytest.mark.parametrize("solver", ["exact", "bnb", "heuristic"])
def test_degenerate_instances(solver):
    one = rng_problem(1, n_units=2, n_steps=1)
    one.soc_terminal = np.zeros(2)
    sol = solve(one, solver)
    assert sol.B.shape == (2, 1) and check_feasible(one, sol).passed
    free = rng_problem(2, n_units=2, n_steps=8, switch_cost=0.01)
    free.spot = np.zeros(8)
    free.shed_cost = 0.0
    free.draws = np.zeros((2, 8))
    free.soc_terminal = np.zeros(2)
    sol = solve(free, solver)
    assert sol.objective <= 0.02 * 2 + 1e-12          # at most switching everything off
    assert check_feasible(free, sol).passed


@pytest.mark.parametrize("equal, c_sw", [(True, 0.0), (True, 0.02), (False, 0.0)])
def test_infeasible_demand_raises(equal, c_sw):
    prob = rng_problem(0, n_units=2, n_steps=2, equal=equal, switch_cost=c_sw)
    prob.soc0 = np.zeros(2)
    prob.soc_terminal = np.full(2, 9.0)
    for solver in ("exact", "bnb", "heuristic"):
        with pytest.raises(InfeasibleError):
            solve(prob, solver)


def test_bnb_node_limit_without_incumbent():
    prob = rng_problem(3, n_units=2, n_steps=12, equal=False, switch_cost=0.02)
    with pytest.raises(SolverLimitError):
        solve_bnb(prob, warm_start=False, max_nodes=1, gap_tol=0.0)


def test_bnb_time_limit_returns_incumbent_and_bound():
    prob = rng_problem(5, n_units=3, n_steps=40, equal=False, switch_cost=0.02)
    sol = solve_bnb(prob, gap_tol=0.0, time_limit=0.2)
    assert sol.status in ("optimal", "gap")
    assert np.isfinite(sol.lower_bound) and sol.lower_bound <= sol.objective
    assert check_feasible(prob, sol).passed


def test_unknown_solver():
    with pytest.raises(ValueError, match="unknown solver"):
        solve(rng_problem(0), "simplex")


def test_exact_refuses_large_instances():
    with pytest.raises(ValueError, match="enumeration limit"):
        solve_exact(rng_problem(0, n_units=2, n_steps=13))


def test_flow_needs_equal_ratings():
    with pytest.raises(ValueError):
        solve_flow(rng_problem(0, switch_cost=0.01))


@pytest.mark.slow
def test_bnb_two_groups_full_day():
    from pvdr.grid import default_feeder
    from pvdr.scenario.data import synth_dataset
    from pvdr.scenario.fleet import make_fleet
    from pvdr.scenario.runner import ScenarioConfig, day_context, day_problem

    model = default_feeder()
    ds = synth_dataset(0, days=[160])
    fleet = make_fleet(model, ds, ds.kwp_for_penetration(0.7))
    prob = day_problem(day_context(model, ds, fleet, 0),
                       ScenarioConfig(n_ewh_groups=2, n_pv_groups=2))
    assert prob.rating.shape == (2,) and prob.n_steps == 144
    for warm in (True, False):
        sol = solve_bnb(prob, gap_tol=5e-3, time_limit=60.0, warm_start=warm)
        assert sol.gap < 5e-3 and sol.runtime < 60.0
        assert check_feasible(prob, sol).passed


# ---------------------------------------------------------------- monotone

@settings(max_examples=15)
@given(seeds, st.booleans())
def test_switch_count_and_money_monotone_in_switch_cost(seed, equal):
    base = rng_problem(seed, n_units=2, n_steps=10, equal=equal)
    feasible_or_skip(base)
    prev = None
    for c in (0.0, 0.005, 0.02, 0.08, 0.3):
        sol = solve_exact(base.with_horizon(0, switch_cost=c))
        money = sol.objective - c * sol.switch_count
        if prev is not None:
            assert sol.switch_count <= prev[0]
            assert money >= prev[1] - 1e-9
        prev = (sol.switch_count, money)


def _identical_fleet(rng, n, N):
    soc0 = np.full(n, rng.uniform(2, 8))
    draw = rng.uniform(0, 0.8, N) * (rng.random(N) < 0.5)
    shape = np.sin(np.linspace(0.2, np.pi - 0.2, N))
    return FleetInputs(
        spot=rng.uniform(0.02, 0.12, N), load=rng.uniform(2, 6, N) * n / 4,
        pv=np.tile(shape * rng.uniform(2, 6), (n, 1)), pv_bus=np.arange(n),
        ewh_rating=np.full(n, 4.5), ewh_bus=np.arange(n), soc0=soc0, soc_max=np.full(n, 10.0),
        draws=np.tile(draw, (n, 1)), next_draw=np.full(n, min(soc0[0], 1.0)),
        p_min=-rng.uniform(0, 6), p_max=60.0, b_init=np.zeros(n, dtype=np.int64),
        switch_cost=rng.choice([0.0, 0.01]))


@settings(max_examples=10)
@given(seeds)
def test_finer_nested_grouping_never_costs_more(seed):
    # with identical members a coarse schedule is feasible for every refinement
    f = _identical_fleet(np.random.default_rng(seed), 4, 6)
    objs = []
    for g in (1, 2, 4):
        try:
            objs.append(solve_exact(build_problem(f, g, g)).objective)
        except InfeasibleError:
            objs.append(np.inf)
    assume(np.isfinite(objs[0]))
    assert objs[1] <= objs[0] + 1e-9
    assert objs[2] <= objs[1] + 1e-9


# ---------------------------------------------------------------- grouping

def test_round_robin_examples():
    assert round_robin(np.arange(20), 20) == [[j] for j in range(20)]
    assert round_robin(np.arange(20), 2) == [list(range(0, 20, 2)), list(range(1, 20, 2))]
    assert round_robin(np.array([5, 1, 3]), 2) == [[0, 1], [2]]
    with pytest.raises(ValueError):
        round_robin(np.arange(3), 0)
    with pytest.raises(ValueError):
        round_robin(np.arange(3), 4)


def test_build_problem_aggregates_groups():
    n, N = 20, 6
    f = FleetInputs(spot=np.full(N, 0.05), load=np.full(N, 10.0), pv=np.ones((n, N)),
                    pv_bus=np.arange(n), ewh_rating=np.full(n, 4.5), ewh_bus=np.arange(n),
                    soc0=np.arange(n, dtype=float) * 0.5, soc_max=np.full(n, 18.0),
                    draws=np.full((n, N), 0.1), next_draw=np.full(n, 0.2), p_min=-10, p_max=60)
    same = build_problem(f, 20, 20)
    np.testing.assert_array_equal(same.rating, f.ewh_rating)
    np.testing.assert_array_equal(same.soc0, f.soc0)
    assert same.pv_rampable
    two = build_problem(f, 2, 4)
    np.testing.assert_array_equal(two.rating, [45.0, 45.0])
    assert two.ewh_members[0] == list(range(0, 20, 2))
    np.testing.assert_allclose(two.soc0, [f.soc0[0::2].sum(), f.soc0[1::2].sum()])
    np.testing.assert_allclose(two.pv, np.full((4, N), 5.0))
    assert not two.pv_rampable


# ---------------------------------------------------------------- shedding

def _pv(levels, per=10, steps=2):
    return np.repeat(np.asarray(levels, dtype=float)[:, None], per * steps, axis=1)


def test_rampable_split_is_proportional():
    pv = _pv([10.0, 10.0])
    cur = apply_shedding(np.array([10.0, 0.0]), pv, [[0], [1]], True, n_steps=2)
    np.testing.assert_allclose(cur.curtail[:, :10], 5.0)
    np.testing.assert_allclose(cur.curtail[:, 10:], 0.0)
    np.testing.assert_allclose(cur.shed, [10.0, 0.0])
    assert not cur.capped.any()


def test_on_off_groups_overshoot():
    pv = _pv([8.0, 7.0])
    cur = apply_shedding(np.array([10.0, 0.0]), pv, [[0], [1]], False, n_steps=2)
    assert cur.shed[0] == pytest.approx(15.0)
    assert cur.shed[1] == 0.0
    cur = apply_shedding(np.array([6.0, 0.0]), pv, [[0], [1]], False, n_steps=2)
    assert cur.shed[0] == pytest.approx(7.0)       # smallest single group that covers


def test_zero_target_curtails_nothing():
    pv = _pv([8.0, 7.0])
    for ramp in (True, False):
        cur = apply_shedding(np.zeros(2), pv, [[0], [1]], ramp, n_steps=2)
        assert isinstance(cur, Curtailment)
        assert cur.energy_kwh == 0.0 and not cur.capped.any()


def test_target_above_output_is_capped():
    cur = apply_shedding(np.array([20.0, 0.0]), _pv([8.0, 7.0]), [[0], [1]], True, n_steps=2)
    assert cur.capped[0] and cur.shed[0] == pytest.approx(15.0)


@given(seeds)
def test_on_off_never_sheds_less_than_ramping(seed):
    rng = np.random.default_rng(seed)
    pv = rng.uniform(0, 10, (4, 40))
    target = rng.uniform(0, 15, 4)
    ramp = apply_shedding(target, pv, [[0, 1], [2], [3]], True, n_steps=4)
    onoff = apply_shedding(target, pv, [[0, 1], [2], [3]], False, n_steps=4)
    assert np.all(onoff.shed >= ramp.shed - 1e-9)
    assert np.all(ramp.curtail <= pv + 1e-12) and np.all(onoff.curtail <= pv + 1e-12)


# ----------------------------------------------------------- serialisation

def test_problem_and_solution_roundtrip(tmp_path):
    prob = rng_problem(7, n_units=2, n_steps=12, equal=False, switch_cost=0.01, n_pv=2)
    sol = solve_heuristic(prob)
    text = json.dumps(problem_to_dict(prob))
    back = problem_from_dict(json.loads(text))
    for name in ("spot", "load", "pv", "rating", "draws", "soc0", "soc_max", "soc_terminal",
                 "b_init"):
        np.testing.assert_array_equal(getattr(back, name), getattr(prob, name))
    assert back.switch_cost == prob.switch_cost and back.p_min == prob.p_min
    sol2 = solution_from_dict(json.loads(json.dumps(solution_to_dict(sol))))
    np.testing.assert_array_equal(sol2.B, sol.B)
    assert sol2.objective == sol.objective
    assert check_feasible(back, sol2).passed
    with pytest.raises(ValueError):
        problem_from_dict({"kind": "something-else"})


def test_finalize_picks_cheapest_shed():
    prob = rng_problem(8, n_units=2, n_steps=12)
    B = np.zeros((2, 12), dtype=np.int8)
    sol = finalize(prob, B, "heuristic")
    np.testing.assert_allclose(sol.shed.sum(axis=0), np.clip(prob.need, 0, None))
