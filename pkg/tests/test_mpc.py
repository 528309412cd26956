import numpy as np
import pytest

from pvdr.assets import replay_soc
from pvdr.dispatch import InfeasibleError, check_feasible, finalize, solve
from pvdr.forecast import ForecastConfig, hourly_traces, make_forecast
from pvdr.mpc import (horizon_problem, initial_state, mpc_step, run_day_ahead, run_mpc_day,
                      solve_forced)
from helpers import random_problem

ZERO = ForecastConfig(0.0, 0.0, 0.0, 0.0)


@pytest.fixture(scope="module")
def day():
    from pvdr.grid import default_feeder
    from pvdr.scenario.data import synth_dataset
    from pvdr.scenario.fleet import make_fleet
    from pvdr.scenario.runner import ScenarioConfig, day_context, mpc_template

    model = default_feeder()
    ds = synth_dataset(0, days=[172])
    fleet = make_fleet(model, ds, ds.kwp_for_penetration(0.7))
    ctx = day_context(model, ds, fleet, 0)
    return mpc_template(ctx, ScenarioConfig()), ds.pv_pu[0]


def test_zero_error_mpc_matches_deterministic(day):
    template, pu = day
    det = solve(template)
    res = run_mpc_day(template, hourly_traces(pu, ZERO))
    applied = finalize(template, res.B, "heuristic")
    assert applied.objective == pytest.approx(det.objective, abs=1e-9)
    assert check_feasible(template, applied).passed
    assert res.fallbacks == []


def test_perfect_day_ahead_matches_deterministic(day):
    template, pu = day
    sol = run_day_ahead(template, make_forecast(pu, 0, ZERO))
    assert sol.objective == pytest.approx(solve(template).objective, abs=1e-12)
    assert sol.info["fallback"] is None


def test_soc_continuity_and_log(day):
    template, pu = day
    res = run_mpc_day(template, hourly_traces(pu, ForecastConfig(seed=5)))
    assert res.B.shape == (template.n_units, 144)
    ref = replay_soc(template.soc0, template.rating, res.B, template.dt, template.draws)
    np.testing.assert_allclose(res.soc, ref, rtol=0, atol=1e-9)
    assert [e["steps"] for e in res.log] == [6 * (24 - h) for h in range(24)]
    assert res.log[-1]["steps"] == 6
    for h, e in enumerate(res.log):
        assert np.abs(e["soc_start"] - res.soc[:, 6 * h]).max() <= 1e-9
    for h, sol in enumerate(res.solutions):
        np.testing.assert_array_equal(sol.B[:, :6], res.B[:, 6 * h:6 * h + 6])


def test_zero_pv_day_ignores_forecasts(day):
    template, _ = day
    dark = template.with_horizon(0, pv=np.zeros_like(template.pv))
    traces = hourly_traces(np.zeros(1440), ForecastConfig(seed=3))
    res = run_mpc_day(dark, traces)
    da = run_day_ahead(dark, traces[0])
    det = solve(dark)
    assert finalize(dark, res.B, "h").objective == pytest.approx(det.objective, abs=1e-9)
    np.testing.assert_array_equal(da.B, det.B)
    assert finalize(dark, res.B, "h").shed_energy == 0.0


def test_single_step_interface(day):
    template, pu = day
    traces = hourly_traces(pu, ForecastConfig(seed=2))
    state = initial_state(template)
    ctrl, state, sol = mpc_step(state, traces[0], template)
    assert ctrl.shape == (template.n_units, 6) and state.hour == 1
    assert state.applied.shape == (template.n_units, 6)
    prob = horizon_problem(template, state, template.pv)
    assert prob.n_steps == 138
    np.testing.assert_array_equal(prob.soc0, state.soc_hat)
    np.testing.assert_array_equal(prob.b_init, ctrl[:, -1])
    with pytest.raises(ValueError):
        run_mpc_day(template, traces[:5])


def test_fallback_lifts_limits_when_heating_cannot_fit():
    prob = random_problem(np.random.default_rng(1), n_units=2, n_steps=12)
    prob.soc0 = np.zeros(2)
    prob.draws = np.zeros((2, 12))
    prob.soc_terminal = np.full(2, 4.0)           # needs heating in most steps
    prob.load = np.full(12, 2.0)
    prob.pv = np.zeros((1, 12))
    prob.p_max = 5.0                              # but only one heater fits under the limit
    with pytest.raises(InfeasibleError):
        solve(prob)
    sol, fallback = solve_forced(prob)
    assert fallback == "relaxed_limits"
    assert sol.B.sum() >= 12


def test_fallback_reraises_when_demand_unreachable():
    prob = random_problem(np.random.default_rng(1), n_units=2, n_steps=3)
    prob.soc0 = np.zeros(2)
    prob.soc_terminal = np.full(2, 9.0)
    with pytest.raises(InfeasibleError):
        solve_forced(prob)


def test_mpc_logs_fallback_hours():
    rng = np.random.default_rng(4)
    N = 12
    prob = random_problem(rng, n_units=2, n_steps=N)
    prob.soc0 = np.zeros(2)
    prob.draws = np.zeros((2, N))
    prob.soc_terminal = np.full(2, 4.0)
    prob.load = np.full(N, 2.0)
    prob.pv = np.zeros((1, N))
    prob.p_max = 5.0
    traces = [make_forecast(np.zeros(N), h * 3, ZERO, smoothed=False) for h in range(4)]
    res = run_mpc_day(prob, traces, steps_per_hour=3)
    assert res.fallbacks and res.fallbacks[0] == 0
    assert res.log[0]["fallback"] == "relaxed_limits"
