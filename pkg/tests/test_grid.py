import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pvdr import grid
from pvdr.grid import (Bus, ConfigError, FeederModel, Line, PowerFlowError, TopologyError,
                       calibrate_feeder, default_feeder, double_feeder_template, expand_blocks,
                       feeder_from_dict, feeder_to_dict, load_feeder, max_voltage_rise,
                       peak_load_min_voltage, save_feeder, simulate_minutes, solve_power_flow,
                       uniform_pv_rise)
from oracles import newton_power_flow, two_bus_voltage


def two_bus(r=0.1, x=0.05):
    return FeederModel((Bus(0, 0, False, False), Bus(1, 10)), (Line(0, 1, r, x),))


@pytest.fixture
def use_backend(backend, monkeypatch):
    monkeypatch.setattr(grid, "kernels", backend)
    return backend


def test_no_flow_is_flat(use_backend):
    m = default_feeder()
    sol = solve_power_flow(m, np.zeros(m.n_buses))
    assert np.all(sol.vm == 1.01)
    assert sol.losses == 0.0
    assert max_voltage_rise(sol, m) == 0.0


def test_two_bus_matches_closed_form(use_backend):
    m = two_bus()
    sol = solve_power_flow(m, np.array([0.0, 10.0]))
    zbase = 400.0 ** 2 / 100e3
    ref = two_bus_voltage(1.01, 0.1 / zbase, 0.05 / zbase, 0.1, 0.0)
    assert abs(sol.vm[1] - ref) < 1e-8


def test_two_bus_closed_form_with_reactive_load(use_backend):
    m = two_bus(0.3, 0.12)
    sol = solve_power_flow(m, np.array([0.0, 25.0]), np.array([0.0, 8.0]))
    zbase = 1.6
    ref = two_bus_voltage(1.01, 0.3 / zbase, 0.12 / zbase, 0.25, 0.08)
    assert abs(sol.vm[1] - ref) < 1e-8


def test_pv_raises_voltage():
    sol = solve_power_flow(two_bus(), np.array([0.0, -10.0]))
    assert sol.vm[1] > 1.01


@st.composite
def small_feeders(draw):
    n = draw(st.integers(2, 4))
    parents = [draw(st.integers(0, k - 1)) for k in range(1, n)]
    lines = tuple(Line(parents[k - 1], k, draw(st.floats(0.01, 0.4)), draw(st.floats(0.005, 0.2)))
                  for k in range(1, n))
    buses = (Bus(0, 0, False, False),) + tuple(Bus(k, 10) for k in range(1, n))
    p = np.array([0.0] + [draw(st.floats(-40.0, 40.0)) for _ in range(1, n)])
    q = np.array([0.0] + [draw(st.floats(-10.0, 10.0)) for _ in range(1, n)])
    return FeederModel(buses, lines), p, q


@given(small_feeders())
def test_sweep_matches_newton(case):
    model, p, q = case
    sol = solve_power_flow(model, p, q)
    ref = newton_power_flow(model, p, q)
    assert np.abs(sol.voltages - ref).max() < 1e-7


@given(small_feeders())
def test_power_balance_and_losses(case):
    model, p, q = case
    sol = solve_power_flow(model, p, q)
    assert abs(sol.slack_injection - (p.sum() + sol.losses)) < 1e-6
    assert sol.losses >= 0.0
    assert np.all(sol.vm > 0)
    # losses from the branch flows: I^2 R with I from the sending-end power
    zbase = model.nominal_voltage ** 2 / (model.base_power * 1e3)
    v = sol.voltages
    ohmic = 0.0
    for ln, pk, qk in zip(model.lines, sol.line_p, sol.line_q):
        i2 = (pk ** 2 + qk ** 2) / model.base_power ** 2 / abs(v[ln.from_bus]) ** 2
        ohmic += i2 * ln.resistance / zbase * model.base_power
    assert abs(ohmic - sol.losses) < 1e-6 * max(1.0, sol.losses)


@given(small_feeders())
def test_losses_zero_iff_no_flow(case):
    model, p, q = case
    assert solve_power_flow(model, 0.0 * p, 0.0 * q).losses == 0.0
    sol = solve_power_flow(model, p, q)
    flows = np.abs(sol.line_p).max() + np.abs(sol.line_q).max()
    assert (sol.losses > 0) == (flows > 1e-12)


@given(small_feeders(), st.data())
def test_voltage_monotone_in_pv_at_bus(case, data):
    model, p, q = case
    bus = data.draw(st.integers(1, model.n_buses - 1))
    more = p.copy()
    more[bus] -= 1.0
    v_a = solve_power_flow(model, p, q).vm[bus]
    v_b = solve_power_flow(model, more, q).vm[bus]
    assert v_b > v_a


def test_zero_scaling_is_flat():
    m = default_feeder()
    rng = np.random.default_rng(0)
    p = rng.uniform(-20, 20, m.n_buses)
    p[0] = 0
    sol = solve_power_flow(m, 0.0 * p)
    assert np.array_equal(sol.vm, np.full(m.n_buses, m.busbar_voltage))


def test_non_convergence_reports_minute():
    m = two_bus(2.0, 1.0)
    with pytest.raises(PowerFlowError):
        solve_power_flow(m, np.array([0.0, 5000.0]))
    load = np.zeros((3, 2))
    load[2, 1] = 5000.0
    with pytest.raises(PowerFlowError) as err:
        simulate_minutes(m, load, np.zeros((3, 2)))
    assert err.value.minute == 2


def test_backends_agree_on_a_day(backend):
    from pvdr.grid import SWEEP_MAX_ITER, SWEEP_TOL, _to_internal
    from pvdr.kernels import python_kernels

    m = default_feeder()
    rng = np.random.default_rng(5)
    p = rng.uniform(-15, 12, (200, m.n_buses))
    p[:, 0] = 0
    args = (m._parent, m._z.real.copy(), m._z.imag.copy(), _to_internal(m, p),
            np.zeros_like(p), m.busbar_voltage, SWEEP_TOL, SWEEP_MAX_ITER)
    a = backend.sweep_batch(*args)
    b = python_kernels.sweep_batch(*args)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, rtol=0, atol=1e-12)


# ------------------------------------------------------------------ topology

def test_rejects_loop():
    buses = (Bus(0, 0, False, False), Bus(1), Bus(2))
    lines = (Line(0, 1, 0.1, 0.1), Line(1, 2, 0.1, 0.1), Line(2, 0, 0.1, 0.1))
    with pytest.raises(TopologyError):
        FeederModel(buses, lines)


def test_rejects_disconnected_bus():
    buses = (Bus(0, 0, False, False), Bus(1), Bus(2), Bus(3))
    lines = (Line(0, 1, 0.1, 0.1), Line(1, 2, 0.1, 0.1), Line(3, 3, 0.1, 0.1))
    with pytest.raises(TopologyError):
        FeederModel(buses, lines)


@pytest.mark.parametrize("change, match", [
    (lambda d: d["lines"][0].update(r_ohm=0.0), r"lines\[0\].r_ohm"),
    (lambda d: d["lines"][3].update(colour="red"), r"lines\[3\]: unknown keys"),
    (lambda d: d["limits"].update(p_min_kw=5.0), "p_min_kw < 0 < p_max_kw"),
    (lambda d: d["buses"][4].update(households=0), r"buses\[4\].households"),
    (lambda d: d.update(extra=1), "feeder: unknown keys"),
])
def test_config_validation_names_field(change, match):
    d = feeder_to_dict(default_feeder())
    change(d)
    with pytest.raises(ConfigError, match=match):
        feeder_from_dict(d)


def test_config_roundtrip_and_syntax_error(tmp_path):
    m = default_feeder()
    path = tmp_path / "f.json"
    save_feeder(m, path)
    back = load_feeder(path)
    assert back == m
    path.write_text(json.dumps(feeder_to_dict(m), indent=2)[:-3] + ",}")
    with pytest.raises(ConfigError, match="line"):
        load_feeder(path)


# --------------------------------------------------------------- calibration

def test_default_feeder_anchors():
    m = default_feeder()
    assert abs(uniform_pv_rise(m, 0.865) - 3.0) < 0.05
    assert peak_load_min_voltage(m, 220.0) >= 0.96
    sol = solve_power_flow(m, 220.0 * m.households / m.households.sum())
    assert max_voltage_rise(sol, m) == 0.0


def test_calibration_hits_target():
    m, rep = calibrate_feeder(double_feeder_template())
    assert abs(rep["rise_pct"] - 3.0) < 1e-9
    assert rep["peak_min_voltage_pu"] >= 0.96
    shipped = default_feeder()
    for a, b in zip(m.lines, shipped.lines):
        assert a.resistance == pytest.approx(b.resistance, rel=1e-9)


# ------------------------------------------------------------------ minutes

def test_minutes_zero_pv_no_violation():
    m = default_feeder()
    load = np.tile(m.households * 0.5, (30, 1))
    sim = simulate_minutes(m, load, np.zeros_like(load))
    assert sim.violation_minutes == 0
    assert np.all(sim.losses_kw > 0)


def test_minutes_far_above_hosting_capacity_violates():
    m = default_feeder()
    pv = np.tile(m.households * 3.0, (10, 1))
    sim = simulate_minutes(m, np.zeros_like(pv), pv)
    assert sim.violation_minutes == 10


def test_schedule_blocks_add_to_load():
    m = default_feeder()
    T = 20
    load = np.tile(m.households * 0.3, (T, 1))
    sched = np.zeros((2, m.n_buses))
    sched[1, 5] = 4.5
    a = simulate_minutes(m, load, np.zeros_like(load), schedule_kw=sched)
    b = simulate_minutes(m, load + expand_blocks(sched, T), np.zeros_like(load))
    np.testing.assert_array_equal(a.losses_kw, b.losses_kw)
    assert a.losses_kw[15] > a.losses_kw[5]
    with pytest.raises(ValueError):
        expand_blocks(np.zeros((3, 2)), 10)


def test_losses_lower_at_24_percent_than_without_pv():
    from pvdr.scenario.data import synth_dataset
    from pvdr.scenario.fleet import bus_matrix, day_minutes, make_fleet

    m = default_feeder()
    ds = synth_dataset(0, days=[150])
    losses = []
    for pen in (0.0, 0.24):
        fleet = make_fleet(m, ds, ds.kwp_for_penetration(pen))
        load, pv = day_minutes(m, ds, fleet, 0)
        losses.append(simulate_minutes(m, load, bus_matrix(m, fleet.pv_bus, pv)).losses_kwh)
    assert losses[1] < losses[0]
