"""Seeded synthetic scenario data: per-bus load, PV shape, spot prices."""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np

from ..assets import (CAPACITY_FACTOR, MINUTES_PER_DAY, PASSIVE_KWH_PER_HOUSEHOLD, DrawProfile,
                      _normalise_pv, load_day, pv_day, synth_spot_prices)

SAMPLE_DAYS = 14
SAMPLE_SPACING = 26          # days between representative days; also their weight
YEAR = 2013


@dataclass
class Dataset:
    """Minute-resolution inputs for a set of days.

    ``weights`` says how many days of the year each entry stands for, so
    weighted sums are yearly totals.
    """
    days: list                       # datetime.date per entry
    weights: np.ndarray              # (D,)
    load: np.ndarray                 # (D, buses, 1440) passive kW per load bus
    pv_pu: np.ndarray                # (D, 1440) output per kWp installed
    spot: np.ndarray                 # (D, 24) EUR/MWh
    households: np.ndarray           # (buses,)
    bus_ids: np.ndarray              # (buses,)
    draw_profile: DrawProfile = field(default_factory=DrawProfile)

    def __post_init__(self):
        D = len(self.days)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.load.shape[0] != D or self.pv_pu.shape != (D, MINUTES_PER_DAY) or self.spot.shape != (D, 24):
            raise ValueError("dataset arrays do not match the number of days")
        if self.load.shape[1] != len(self.households):
            raise ValueError("one household count per load bus required")

    @property
    def n_days(self):
        return len(self.days)

    @property
    def year_days(self):
        return float(self.weights.sum())

    def yearly_pv_kwh_per_kwp(self):
        return float(self.weights @ self.pv_pu.sum(axis=1) / 60.0)

    def yearly_passive_kwh(self):
        return float(self.weights @ self.load.sum(axis=(1, 2)) / 60.0)

    def yearly_draw_kwh(self):
        return float(self.households.sum() * self.draw_profile.daily_demand_per_household
                     * self.year_days)

    def yearly_consumption_kwh(self):
        """Passive consumption plus hot-water energy of all households."""
        return self.yearly_passive_kwh() + self.yearly_draw_kwh()

    def kwp_for_penetration(self, penetration):
        """Installed kWp (feeder total) giving ``penetration`` of yearly consumption."""
        return penetration * self.yearly_consumption_kwh() / self.yearly_pv_kwh_per_kwp()

    def penetration(self, kwp_total):
        return kwp_total * self.yearly_pv_kwh_per_kwp() / self.yearly_consumption_kwh()

    def subset(self, index):
        index = list(index)
        return Dataset([self.days[i] for i in index], self.weights[index], self.load[index],
                       self.pv_pu[index], self.spot[index], self.households, self.bus_ids,
                       self.draw_profile)


def _weighted_normalise_pv(pu, weights, capacity_factor):
    """Scale so the weighted mean output equals ``capacity_factor`` with output <= 1."""
    w = np.repeat(weights / weights.sum(), pu.shape[1]) * pu.shape[0]
    flat = pu.ravel()
    for _ in range(30):
        flat = np.minimum(flat * (capacity_factor / np.mean(flat * w)), 1.0)
    return (flat * (capacity_factor / np.mean(flat * w))).reshape(pu.shape)


def synth_dataset(seed=0, days=None, bus_ids=None, households=None, capacity_factor=CAPACITY_FACTOR,
                  annual_kwh_per_household=PASSIVE_KWH_PER_HOUSEHOLD):
    """Seeded dataset; representative days by default, explicit days otherwise.

    Parameters
    ----------
    seed : int
    days : sequence of int, optional
        Day-of-year indices (0-based). Defaults to 14 days spread evenly
        over the year, each standing for 26 days.
    bus_ids, households : sequences, optional
        Load buses and households per bus (default 20 buses of 10).

    Energy is normalised over the chosen days (by weight), so any sample
    reproduces the yearly capacity factor and per-household consumption.
    """
    if days is None:
        days = [SAMPLE_SPACING // 2 + SAMPLE_SPACING * j for j in range(SAMPLE_DAYS)]
        weights = np.full(len(days), float(SAMPLE_SPACING))
    else:
        days = list(days)
        if not days:
            raise ValueError("no days selected")
        weights = np.full(len(days), 365.0 / len(days)) if len(days) < 365 else np.ones(len(days))
    bus_ids = np.arange(1, 21) if bus_ids is None else np.asarray(bus_ids)
    households = np.full(len(bus_ids), 10) if households is None else np.asarray(households)
    first = date(YEAR, 1, 1)
    dates = [first + timedelta(days=int(d)) for d in days]
    pv = np.empty((len(days), MINUTES_PER_DAY))
    load = np.empty((len(days), len(bus_ids), MINUTES_PER_DAY))
    spot_all = synth_spot_prices(365, seed=seed + 7919)
    spot = np.empty((len(days), 24))
    for j, (d, dt_) in enumerate(zip(days, dates)):
        rng = np.random.default_rng([seed, int(d)])
        doy = dt_.timetuple().tm_yday
        pv[j] = pv_day(doy, rng)
        for b in range(len(bus_ids)):
            load[j, b] = load_day(doy, dt_.weekday(), int(households[b]), rng)
        spot[j] = spot_all[int(d) % 365]
    pv = _weighted_normalise_pv(pv, weights, capacity_factor)
    target = households.sum() * annual_kwh_per_household * weights.sum() / 365.0
    load *= target / (weights @ load.sum(axis=(1, 2)) / 60.0)
    return Dataset(dates, weights, load, pv, spot, households, bus_ids)
