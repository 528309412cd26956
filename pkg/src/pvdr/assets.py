"""Water heaters, hot-water draws, PV plants and synthetic load/PV/price series."""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import NamedTuple

import numpy as np
from scipy.signal import lfilter

STEPS_PER_DAY = 144
MINUTES_PER_DAY = 1440
DT_HOURS = 1.0 / 6.0

EWH_RATING_KW = 4.5
EWH_SOC_MAX_KWH = 18.0          # 4.5 kW x 4 h
DAILY_HOT_WATER_KWH = 1.03      # per household
CAPACITY_FACTOR = 0.0983
# DACHCZ anchor pair: 0.865 kWp per household <-> 28.57 % penetration
DACHCZ_KWP_PER_HOUSEHOLD = 0.865
DACHCZ_PENETRATION = 0.2857
ANNUAL_KWH_PER_HOUSEHOLD = DACHCZ_KWP_PER_HOUSEHOLD * 8760 * CAPACITY_FACTOR / DACHCZ_PENETRATION
PASSIVE_KWH_PER_HOUSEHOLD = ANNUAL_KWH_PER_HOUSEHOLD - 365 * DAILY_HOT_WATER_KWH

LATITUDE_DEG = 47.4
SOLAR_NOON_UTC_H = 11.43


@dataclass
class Ewh:
    id: int
    bus: int
    power_rating: float = EWH_RATING_KW
    soc: float = 0.5 * EWH_SOC_MAX_KWH
    soc_max: float = EWH_SOC_MAX_KWH
    group: int = 0

    def __post_init__(self):
        if not self.power_rating > 0:
            raise ValueError(f"EWH {self.id}: power rating must be positive")
        if not 0 <= self.soc <= self.soc_max:
            raise ValueError(f"EWH {self.id}: soc {self.soc} outside [0, {self.soc_max}]")


@dataclass
class PvPlant:
    id: int
    bus: int
    peak_power: float
    group: int = 0
    rampable: bool = True

    def __post_init__(self):
        if not self.peak_power > 0:
            raise ValueError(f"PV plant {self.id}: peak power must be positive")


def _default_draw_weights():
    hours = (np.arange(STEPS_PER_DAY) + 0.5) / 6.0

    def bump(center, width, height):
        return height * np.exp(-0.5 * ((hours - center) / width) ** 2)

    w = (0.04 + bump(7.25, 0.8, 3.0) + bump(12.5, 1.0, 0.9)
         + bump(19.5, 1.3, 2.2) + bump(22.0, 0.6, 0.7))
    w[hours < 5.0] *= 0.3
    return w / w.sum()


@dataclass
class DrawProfile:
    """Share of the daily hot-water demand drawn in each 10-minute step."""
    weights: np.ndarray = field(default_factory=_default_draw_weights)
    daily_demand_per_household: float = DAILY_HOT_WATER_KWH

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (STEPS_PER_DAY,):
            raise ValueError(f"draw profile needs {STEPS_PER_DAY} weights")
        if (self.weights < 0).any():
            raise ValueError("draw weights must be non-negative")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"draw weights sum to {self.weights.sum()!r}, not 1")

    @classmethod
    def uniform(cls, daily_demand_per_household=DAILY_HOT_WATER_KWH):
        return cls(np.full(STEPS_PER_DAY, 1.0 / STEPS_PER_DAY), daily_demand_per_household)

    def day(self, households):
        """Draws (kWh) for all 144 steps of one day."""
        return self.weights * self.daily_demand_per_household * households


def draw_at(profile, step, households):
    """Hot-water energy (kWh) drawn during 10-minute ``step`` by ``households``."""
    if not 0 <= step < STEPS_PER_DAY:
        raise IndexError(f"step {step} outside 0..{STEPS_PER_DAY - 1}")
    return profile.weights[step] * profile.daily_demand_per_household * households


class SocUpdate(NamedTuple):
    soc: float      # before any clamping
    unmet: bool


def soc_step(ewh, on, dt, draw):
    """Advance one step of the tank energy balance.

    The returned soc is not clamped; ``unmet`` flags a negative value so the
    caller can record unserved hot water.
    """
    soc = ewh.soc + ewh.power_rating * int(on) * dt - draw
    return SocUpdate(soc, soc < 0.0)


def replay_soc(soc0, rating, schedule, dt, draws):
    """SoC trajectories (units, N+1) for on/off ``schedule`` (units, N).

    Uses the same operation order as :func:`soc_step`, so results are
    bitwise identical to stepping each heater by hand.
    """
    schedule = np.asarray(schedule)
    draws = np.asarray(draws, dtype=float)
    rating = np.asarray(rating, dtype=float)
    out = np.empty((schedule.shape[0], schedule.shape[1] + 1))
    out[:, 0] = soc0
    for k in range(schedule.shape[1]):
        out[:, k + 1] = out[:, k] + rating * schedule[:, k] * dt - draws[:, k]
    return out


@dataclass
class TimeSeries:
    start: datetime
    resolution: int              # minutes
    values: np.ndarray           # (T,) or (T, columns)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not (10 % self.resolution == 0):
            raise ValueError("resolution must divide 10 minutes")
        if np.isnan(self.values).any():
            raise ValueError("time series contains gaps")

    def __len__(self):
        return self.values.shape[0]

    @property
    def energy_kwh(self):
        return self.values.sum(axis=0) * self.resolution / 60.0

    def timestamps(self):
        return [self.start + timedelta(minutes=self.resolution * k) for k in range(len(self))]


# ------------------------------------------------------------ synthetic data

def _solar_shape(doy):
    """Clear-sky per-unit output of a south-facing 30 degree plant, per minute."""
    phi = np.radians(LATITUDE_DEG)
    tilt = np.radians(30.0)
    decl = np.radians(23.44) * np.sin(2 * np.pi * (284 + doy) / 365.0)
    hour = (np.arange(MINUTES_PER_DAY) + 0.5) / 60.0
    h = np.radians(15.0 * (hour - SOLAR_NOON_UTC_H))
    sin_el = np.sin(phi) * np.sin(decl) + np.cos(phi) * np.cos(decl) * np.cos(h)
    cos_inc = np.sin(phi - tilt) * np.sin(decl) + np.cos(phi - tilt) * np.cos(decl) * np.cos(h)
    up = sin_el > 0.01
    airmass = 1.0 / np.where(up, sin_el, 1.0)
    beam = 0.7 ** (airmass ** 0.678) / 0.7
    out = np.where(up, np.clip(cos_inc, 0, None) * beam + 0.12 * np.clip(sin_el, 0, None), 0.0)
    return out


def _smooth_noise(rng, n, tau, sigma):
    """AR(1) noise with correlation time ``tau`` samples."""
    a = np.exp(-1.0 / tau)
    e = rng.normal(scale=sigma * np.sqrt(1 - a * a), size=n)
    x0 = rng.normal(scale=sigma)
    return lfilter([1.0], [1.0, -a], e, zi=[a * x0])[0]


def _cloud_factor(rng, doy):
    summer = 0.5 - 0.5 * np.cos(2 * np.pi * (doy - 15) / 365.0)
    p_clear = 0.05 + 0.22 * summer
    p_over = 0.62 - 0.27 * summer
    u = rng.random()
    n = MINUTES_PER_DAY
    if u < p_clear:
        return np.clip(1.0 + _smooth_noise(rng, n, 30, 0.01), 0.9, 1.02)
    if u < 1.0 - p_over:
        # broken clouds: two-state process, shaded minutes at 25-55 %
        cover = rng.uniform(0.35, 0.8)
        shade = rng.uniform(0.2, 0.45)
        redraw = rng.random(n) < 1.0 / 12.0
        redraw[0] = True
        shaded = rng.random(n) < cover
        last = np.maximum.accumulate(np.where(redraw, np.arange(n), 0))
        f = np.where(shaded[last], shade, 1.0)
        kernel = np.ones(3) / 3.0
        return np.convolve(f, kernel, mode="same")
    level = rng.uniform(0.06, 0.22)
    return np.clip(level * (1.0 + _smooth_noise(rng, n, 60, 0.2)), 0.03, 0.6)


def pv_day(doy, rng):
    """Raw per-unit PV output for one day (minutes), before energy normalisation."""
    return _solar_shape(doy) * _cloud_factor(rng, doy)


def _normalise_pv(pu, capacity_factor):
    for _ in range(20):
        pu = pu * (capacity_factor / pu.mean())
        pu = np.minimum(pu, 1.0)
    return pu * (capacity_factor / pu.mean())


def _household_day_shape(doy, weekday):
    hour = (np.arange(MINUTES_PER_DAY) + 0.5) / 60.0

    def bump(center, width, height):
        return height * np.exp(-0.5 * ((hour - center) / width) ** 2)

    morning = 7.0 if weekday < 5 else 9.0
    shape = (0.14 + bump(morning, 1.0, 0.30) + bump(12.3, 1.5, 0.16)
             + bump(19.2, 1.8, 0.55) + bump(22.0, 1.0, 0.12))
    season = 1.0 + 0.22 * np.cos(2 * np.pi * (doy - 15) / 365.0)
    return shape * season


def load_day(doy, weekday, households, rng):
    """Raw passive load (kW) of ``households`` homes for one day."""
    noise = _smooth_noise(rng, MINUTES_PER_DAY, 10, 0.35 / np.sqrt(max(households, 1)) + 0.05)
    return households * _household_day_shape(doy, weekday) * np.clip(1.0 + noise, 0.3, None)


def synth_pv_profile(peak_kwp, capacity_factor=CAPACITY_FACTOR, seed=0, days=365,
                     start=datetime(2013, 1, 1)):
    """Minute PV series for ``days`` days whose energy matches ``capacity_factor``."""
    if not peak_kwp > 0:
        raise ValueError("peak power must be positive")
    rng = np.random.default_rng(seed)
    doy0 = start.timetuple().tm_yday
    pu = np.concatenate([pv_day((doy0 - 1 + d) % 365 + 1, rng) for d in range(days)])
    return TimeSeries(start, 1, peak_kwp * _normalise_pv(pu, capacity_factor))


def synth_load_profile(households, seed=0, days=365, start=datetime(2013, 1, 1),
                       annual_kwh_per_household=PASSIVE_KWH_PER_HOUSEHOLD):
    """Minute passive-load series (kW) for ``households`` homes."""
    if households < 1:
        raise ValueError("need at least one household")
    rng = np.random.default_rng(seed)
    raw = []
    for d in range(days):
        day = start + timedelta(days=d)
        raw.append(load_day(day.timetuple().tm_yday, day.weekday(), households, rng))
    raw = np.concatenate(raw)
    target_mean = households * annual_kwh_per_household / 8760.0
    return TimeSeries(start, 1, raw * (target_mean / raw.mean()))


def synth_spot_prices(days, seed=0, start=datetime(2013, 1, 1)):
    """Hourly spot prices in EUR/MWh, shape (days, 24)."""
    rng = np.random.default_rng(seed)
    hour = np.arange(24)
    out = np.empty((days, 24))
    for d in range(days):
        doy = (start + timedelta(days=d)).timetuple().tm_yday
        summer = 0.5 - 0.5 * np.cos(2 * np.pi * (doy - 15) / 365.0)
        shape = (-14 * np.exp(-0.5 * ((hour - 3.5) / 2.2) ** 2)
                 + 11 * np.exp(-0.5 * ((hour - 8.5) / 1.5) ** 2)
                 + (6 - 14 * summer) * np.exp(-0.5 * ((hour - 13) / 2.0) ** 2)
                 + 14 * np.exp(-0.5 * ((hour - 19) / 1.6) ** 2))
        level = 44 + 6 * (1 - summer) + rng.normal(scale=5)
        out[d] = np.clip(level + shape + rng.normal(scale=3, size=24), 5, None)
    return out
