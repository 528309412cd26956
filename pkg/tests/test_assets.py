from datetime import datetime

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pvdr.assets import (DT_HOURS, EWH_RATING_KW, EWH_SOC_MAX_KWH, STEPS_PER_DAY, DrawProfile, Ewh,
                         PvPlant, TimeSeries, draw_at, replay_soc, soc_step, synth_load_profile,
                         synth_pv_profile, synth_spot_prices)


def test_uniform_draw_split():
    prof = DrawProfile.uniform()
    for k in (0, 71, 143):
        assert draw_at(prof, k, 10) == pytest.approx(10.3 / 144, abs=1e-15)


def test_default_profile_day_total():
    prof = DrawProfile()
    total = sum(draw_at(prof, k, 10) for k in range(STEPS_PER_DAY))
    assert abs(total - 10.3) < 1e-9


def test_zero_weight_step():
    w = np.full(STEPS_PER_DAY, 1.0 / 143)
    w[3] = 0.0
    assert draw_at(DrawProfile(w), 3, 10) == 0.0
    with pytest.raises(IndexError):
        draw_at(DrawProfile(), 144, 10)


@given(st.lists(st.floats(0.0, 10.0), min_size=144, max_size=144).filter(lambda v: sum(v) > 1e-3),
       st.integers(1, 40))
def test_draws_conserve_daily_demand(raw, hh):
    w = np.asarray(raw) / np.sum(raw)
    w = w / w.sum()
    try:
        prof = DrawProfile(w)
    except ValueError:       # rounding left the sum a few ulp off
        return
    assert prof.day(hh).sum() == pytest.approx(1.03 * hh, rel=1e-12)


def test_profile_validation():
    with pytest.raises(ValueError):
        DrawProfile(np.full(144, 1.0))
    with pytest.raises(ValueError):
        DrawProfile(np.r_[-0.01, np.full(143, 1.01 / 143)])
    with pytest.raises(ValueError):
        DrawProfile(np.full(10, 0.1))


def test_soc_step_examples():
    ewh = Ewh(0, 1, soc=5.0)
    assert soc_step(ewh, True, 1 / 6, 0.2).soc == pytest.approx(5.55, abs=1e-12)
    assert soc_step(ewh, False, 1 / 6, 0.0) == (5.0, False)
    low = Ewh(1, 1, soc=0.1)
    up = soc_step(low, False, 1 / 6, 0.2)
    assert up.unmet and up.soc == pytest.approx(-0.1)


def test_asset_validation():
    with pytest.raises(ValueError):
        Ewh(0, 1, power_rating=0.0)
    with pytest.raises(ValueError):
        Ewh(0, 1, soc=EWH_SOC_MAX_KWH + 1)
    with pytest.raises(ValueError):
        PvPlant(0, 1, peak_power=0.0)


@given(st.integers(0, 2 ** 32 - 1))
def test_replay_matches_stepping(seed):
    rng = np.random.default_rng(seed)
    I, N = 3, 12
    sched = rng.integers(0, 2, (I, N))
    draws = rng.uniform(0, 0.5, (I, N))
    soc0 = rng.uniform(0, 18, I)
    rating = np.array([4.5, 3.0, 6.0])
    out = replay_soc(soc0, rating, sched, DT_HOURS, draws)
    for i in range(I):
        ewh = Ewh(i, 1, power_rating=rating[i], soc=soc0[i], soc_max=1e9)
        for k in range(N):
            s = soc_step(ewh, sched[i, k], DT_HOURS, draws[i, k]).soc
            assert s == out[i, k + 1]          # same arithmetic order, bitwise equal
            ewh.soc = s if s >= 0 else 0.0
            if s < 0:
                break


def test_fleet_flexible_energy():
    assert 20 * EWH_SOC_MAX_KWH == 360.0
    assert EWH_SOC_MAX_KWH == EWH_RATING_KW * 4


def test_pv_profile_energy_and_night():
    ts = synth_pv_profile(1.0, seed=3)
    assert ts.resolution == 1 and len(ts) == 365 * 1440
    assert ts.energy_kwh == pytest.approx(8760 * 0.0983, rel=0.01)
    assert ts.energy_kwh == pytest.approx(861.1, rel=0.01)
    assert ts.values[0] == 0.0                 # midnight
    midnights = ts.values.reshape(365, 1440)[:, 0]
    assert np.all(midnights == 0.0)
    assert ts.values.max() <= 1.0


def test_load_profile_peak():
    ts = synth_load_profile(200, seed=1)
    assert ts.values.max() <= 220.0
    assert ts.values.min() > 0.0


def test_synthetic_series_are_seeded():
    a = synth_pv_profile(2.0, seed=9, days=3).values
    b = synth_pv_profile(2.0, seed=9, days=3).values
    c = synth_pv_profile(2.0, seed=10, days=3).values
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    p = synth_spot_prices(5, seed=1)
    assert p.shape == (5, 24) and np.array_equal(p, synth_spot_prices(5, seed=1))


def test_timeseries_validation():
    with pytest.raises(ValueError):
        TimeSeries(datetime(2013, 1, 1), 3, np.zeros(4))
    with pytest.raises(ValueError):
        TimeSeries(datetime(2013, 1, 1), 1, np.array([1.0, np.nan]))
    ts = TimeSeries(datetime(2013, 1, 1), 10, np.ones((6, 2)))
    assert np.allclose(ts.energy_kwh, 1.0)
    assert ts.timestamps()[1] == datetime(2013, 1, 1, 0, 10)
