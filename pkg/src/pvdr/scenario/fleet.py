"""Heater and PV fleets on the feeder, per-day minute series and planning inputs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..assets import DT_HOURS, EWH_RATING_KW, EWH_SOC_MAX_KWH, STEPS_PER_DAY
from ..dispatch.problem import SHED_COST, FleetInputs

SOC_INIT_RANGE = (0.25, 0.75)


@dataclass
class Fleet:
    ewh_bus: np.ndarray          # (heaters,) model bus id
    ewh_rating: np.ndarray
    ewh_soc_max: np.ndarray
    draws: np.ndarray            # (heaters, 144) kWh per step, same every day
    pv_bus: np.ndarray           # (plants,) model bus id
    pv_kwp: np.ndarray
    load_bus: np.ndarray         # model bus id of each dataset load column

    @property
    def n_ewh(self):
        return self.ewh_bus.shape[0]

    @property
    def n_pv(self):
        return self.pv_bus.shape[0]

    @property
    def kwp_total(self):
        return float(self.pv_kwp.sum())


def make_fleet(model, dataset, kwp_total, rating=EWH_RATING_KW, soc_max=EWH_SOC_MAX_KWH):
    """One heater per load bus and PV spread over PV buses by household count."""
    bus_ids = [int(b) for b in dataset.bus_ids]
    by_id = {b.id: b for b in model.buses}
    missing = [b for b in bus_ids if b not in by_id]
    if missing:
        raise ValueError(f"dataset buses {missing} not in the feeder")
    hh = dict(zip(bus_ids, dataset.households))
    ewh_bus = np.array([b for b in bus_ids if by_id[b].has_load])
    draws = np.array([dataset.draw_profile.day(hh[b]) for b in ewh_bus])
    pv_bus = np.array([b.id for b in model.buses if b.has_pv and b.id in hh])
    w = np.array([hh[b] for b in pv_bus], dtype=float)
    pv_kwp = kwp_total * w / w.sum() if w.sum() > 0 else np.zeros(len(pv_bus))
    return Fleet(ewh_bus, np.full(len(ewh_bus), float(rating)), np.full(len(ewh_bus), float(soc_max)),
                 draws, pv_bus, pv_kwp, np.array(bus_ids))


def initial_soc(fleet, seed, lo=SOC_INIT_RANGE[0], hi=SOC_INIT_RANGE[1]):
    rng = np.random.default_rng([*np.atleast_1d(seed).tolist(), 104729])
    return rng.uniform(lo, hi, fleet.n_ewh) * fleet.ewh_soc_max


def day_minutes(model, dataset, fleet, d):
    """Passive load per bus ``(1440, buses)`` and PV per plant ``(plants, 1440)``."""
    load = np.zeros((dataset.load.shape[2], model.n_buses))
    load[:, fleet.load_bus] = dataset.load[d].T
    pv = fleet.pv_kwp[:, None] * dataset.pv_pu[d][None, :]
    return load, pv


def bus_matrix(model, buses, values):
    """Scatter per-asset rows ``(assets, T)`` onto bus columns ``(T, buses)``."""
    out = np.zeros((values.shape[1], model.n_buses))
    np.add.at(out.T, np.asarray(buses), values)
    return out


def step_reduce(minutes, how, n_steps=STEPS_PER_DAY):
    """Reduce minute rows ``(..., T)`` to steps by mean or max."""
    per = minutes.shape[-1] // n_steps
    blocks = minutes.reshape(*minutes.shape[:-1], n_steps, per)
    if how == "mean":
        return blocks.mean(axis=-1)
    if how == "peak":
        return blocks.max(axis=-1)
    raise ValueError(f"unknown step reduction {how!r}")


def planning_series(load_bus_minutes, pv_minutes, how="peak"):
    """Per-step load and per-plant PV the dispatch plans against.

    ``mean`` uses 10-minute averages. ``peak`` keeps the worst minute of the
    step: PV at its step maximum and load set so that load minus total PV
    equals the lowest minute value of net load.
    """
    total_load = load_bus_minutes.sum(axis=1)
    if how == "mean":
        return step_reduce(total_load, "mean"), step_reduce(pv_minutes, "mean")
    pv = step_reduce(pv_minutes, "peak")
    worst = step_reduce(-(total_load - pv_minutes.sum(axis=0)), "peak")
    return pv.sum(axis=0) - worst, pv


def spot_steps(dataset, d):
    """Spot price per 10-minute step in EUR/kWh."""
    return np.repeat(dataset.spot[d] / 1000.0, STEPS_PER_DAY // 24)


def fleet_inputs(model, fleet, spot, load, pv, soc0, b_init, switch_cost=0.0,
                 shed_cost=SHED_COST, p_min=None):
    return FleetInputs(
        spot=spot, load=load, pv=pv, pv_bus=fleet.pv_bus, ewh_rating=fleet.ewh_rating,
        ewh_bus=fleet.ewh_bus, soc0=soc0, soc_max=fleet.ewh_soc_max,
        draws=fleet.draws[:, -len(spot):], next_draw=fleet.draws[:, 0],
        p_min=model.p_min if p_min is None else p_min, p_max=model.p_max, b_init=b_init,
        shed_cost=shed_cost, switch_cost=switch_cost, dt=DT_HOURS)
