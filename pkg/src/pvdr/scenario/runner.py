"""Day and scenario runs: plan, realise at minute resolution, price.

A day is planned by one of three controllers (perfect information, hourly
MPC, day-ahead), then played out against the measured minutes: heaters
follow the plan at member level, a real-time limiter at the transformer
sheds PV whenever the net flow would fall below the backflow limit, and
the feeder is solved minute by minute for voltages and losses.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..assets import DT_HOURS, STEPS_PER_DAY
from ..dispatch import SHED_COST, apply_shedding, build_problem, solve
from ..dispatch.problem import transitions
from ..forecast import ForecastConfig, hourly_traces, make_forecast, smooth
from ..grid import simulate_minutes
from ..mpc import run_day_ahead, run_mpc_day, solve_forced
from .fleet import (bus_matrix, day_minutes, fleet_inputs, initial_soc, make_fleet, planning_series,
                    spot_steps, step_reduce)

MODES = ("perfect", "mpc", "day-ahead")
BASES = ("peak", "mean", "smooth")


@dataclass
class ScenarioConfig:
    penetration: float = 0.70
    n_ewh_groups: int = 20
    n_pv_groups: int = 20
    switch_cost: float = 0.0
    shed_cost: float = SHED_COST
    solver: str = "heuristic"
    gap: float = 1e-4
    time_limit: float | None = None
    mode: str = "perfect"
    basis: str = "peak"              # planning series of the perfect-information controller
    forecast: ForecastConfig = field(default_factory=ForecastConfig)
    forecast_seed: int = 0
    soc_seed: int = 0
    curtail: bool = True             # real-time limiter active
    voltage: bool = True             # minute power flow
    p_min: float | None = None       # overrides the feeder's backflow limit

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.basis not in BASES:
            raise ValueError(f"basis must be one of {BASES}")
        if self.penetration < 0:
            raise ValueError("penetration must be non-negative")
        if isinstance(self.forecast, dict):
            self.forecast = ForecastConfig(**self.forecast)

    def replace(self, **changes):
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(changes)
        return ScenarioConfig(**kw)


@dataclass
class CostReport:
    """Money and energy totals of a run (EUR, kWh).

    ``total_cost`` is what consumers pay at spot for passive load and
    heating plus the compensation for shed PV. The switching penalty is a
    virtual cost; ``total_with_penalty`` adds it.
    """
    passive_cost: float = 0.0
    charging_cost: float = 0.0
    shed_energy: float = 0.0
    shed_cost: float = 0.0
    switch_count: float = 0.0
    switching_penalty: float = 0.0
    losses_kwh: float = 0.0
    violation_minutes: float = 0.0
    unmet_kwh: float = 0.0
    pv_kwh: float = 0.0
    consumption_kwh: float = 0.0
    heater_days: float = 0.0

    @property
    def total_cost(self):
        return self.passive_cost + self.charging_cost + self.shed_cost

    @property
    def total_with_penalty(self):
        return self.total_cost + self.switching_penalty

    @property
    def switches_per_ewh_day(self):
        return self.switch_count / self.heater_days if self.heater_days else 0.0

    @property
    def loss_fraction(self):
        return self.losses_kwh / self.consumption_kwh if self.consumption_kwh else 0.0

    def __add__(self, other):
        return CostReport(**{f.name: getattr(self, f.name) + getattr(other, f.name)
                             for f in fields(self)})

    def scaled(self, w):
        return CostReport(**{f.name: w * getattr(self, f.name) for f in fields(self)})

    def to_dict(self):
        out = asdict(self)
        out.update(total_cost=self.total_cost, total_with_penalty=self.total_with_penalty,
                   switches_per_ewh_day=self.switches_per_ewh_day, loss_fraction=self.loss_fraction)
        return out


@dataclass
class Realization:
    heater_kw: np.ndarray            # (heaters, N) mean power actually drawn
    soc: np.ndarray                  # (heaters, N+1) after clamping
    unmet_kwh: np.ndarray            # (heaters,) hot water not served
    curtail_kw: np.ndarray           # (plants, minutes)
    shed_target_kw: np.ndarray       # (N,) limiter setting per step
    net_kw: np.ndarray               # (minutes,) transformer flow before shedding
    simulation: object = None        # grid.MinuteSimulation or None

    @property
    def shed_energy(self):
        return float(self.curtail_kw.sum() / 60.0)


@dataclass
class DayResult:
    day: object
    B: np.ndarray                    # (groups, N) applied on/off
    problem: object                  # perfect-information planning problem
    realization: Realization
    report: CostReport
    plan_objective: float
    info: dict


# ----------------------------------------------------------- per-day setup

@dataclass
class DayContext:
    model: object
    dataset: object
    fleet: object
    index: int
    load_min: np.ndarray             # (minutes, buses)
    pv_min: np.ndarray               # (plants, minutes)
    spot: np.ndarray                 # (N,) EUR/kWh
    soc0: np.ndarray                 # (heaters,)

    @property
    def doy(self):
        return self.dataset.days[self.index].timetuple().tm_yday


def day_context(model, dataset, fleet, d, soc_seed=0):
    load, pv = day_minutes(model, dataset, fleet, d)
    doy = dataset.days[d].timetuple().tm_yday
    return DayContext(model, dataset, fleet, d, load, pv, spot_steps(dataset, d),
                      initial_soc(fleet, (soc_seed, doy)))


def planning_inputs(ctx, basis):
    """Step load and per-plant PV the controller plans with."""
    if basis == "smooth":
        return step_reduce(ctx.load_min.sum(axis=1), "mean"), smooth(ctx.pv_min)
    return planning_series(ctx.load_min, ctx.pv_min, basis)


def day_problem(ctx, cfg, basis=None):
    load, pv = planning_inputs(ctx, basis or cfg.basis)
    fi = fleet_inputs(ctx.model, ctx.fleet, ctx.spot, load, pv, ctx.soc0,
                      np.zeros(ctx.fleet.n_ewh, dtype=np.int64), cfg.switch_cost, cfg.shed_cost,
                      cfg.p_min)
    return build_problem(fi, cfg.n_ewh_groups, cfg.n_pv_groups)


# ----------------------------------------------------------------- realise

def member_schedule(problem, B, n_heaters):
    """Heater-level on/off from group decisions."""
    out = np.zeros((n_heaters, B.shape[1]), dtype=np.int8)
    for g, members in enumerate(problem.ewh_members):
        out[members] = B[g]
    return out


def replay_clamped(soc0, rating, schedule, dt, draws, soc_max):
    """SoC with the thermostat cutting heating at ``soc_max`` and empty tanks flagged.

    Returns the SoC ``(units, N+1)``, the energy drawn per step and the
    unserved hot water per unit.
    """
    schedule = np.asarray(schedule, dtype=float)
    n_units, N = schedule.shape
    soc = np.empty((n_units, N + 1))
    soc[:, 0] = soc0
    energy = np.empty((n_units, N))
    unmet = np.zeros(n_units)
    for k in range(N):
        e = rating * schedule[:, k] * dt
        e = np.minimum(e, np.clip(soc_max - soc[:, k] + draws[:, k], 0.0, None))
        s = soc[:, k] + e - draws[:, k]
        unmet += np.clip(-s, 0.0, None)
        soc[:, k + 1] = np.clip(s, 0.0, None)
        energy[:, k] = e
    return soc, energy, unmet


def limiter_target(net_kw, pv_total_kw, p_min, n_steps=STEPS_PER_DAY):
    """Per-minute shed of a limiter that holds, for each step, the shed of its worst minute."""
    per = net_kw.shape[0] // n_steps
    need = np.clip(p_min - net_kw, 0.0, None).reshape(n_steps, per)
    held = np.repeat(need.max(axis=1), per)
    return np.minimum(held, pv_total_kw), need.max(axis=1)


def realize(ctx, problem, B, cfg):
    """Play out group decisions ``B`` against the day's minute data."""
    fl, model = ctx.fleet, ctx.model
    T = ctx.load_min.shape[0]
    sched = member_schedule(problem, B, fl.n_ewh)
    soc, energy, unmet = replay_clamped(ctx.soc0, fl.ewh_rating, sched, DT_HOURS,
                                        fl.draws, fl.ewh_soc_max)
    heater_kw = energy / DT_HOURS
    heater_min = np.repeat(heater_kw, T // heater_kw.shape[1], axis=1)         # (heaters, T)
    net = ctx.load_min.sum(axis=1) + heater_min.sum(axis=0) - ctx.pv_min.sum(axis=0)
    p_min = model.p_min if cfg.p_min is None else cfg.p_min
    if cfg.curtail:
        target, per_step = limiter_target(net, ctx.pv_min.sum(axis=0), p_min)
        cur = apply_shedding(target, ctx.pv_min, problem.pv_members, problem.pv_rampable)
        curtail = cur.curtail
    else:
        per_step = np.zeros(heater_kw.shape[1])
        curtail = np.zeros_like(ctx.pv_min)
    sim = None
    if cfg.voltage:
        pv_bus = bus_matrix(model, fl.pv_bus, ctx.pv_min - curtail)
        ewh_bus = bus_matrix(model, fl.ewh_bus, heater_min)
        sim = simulate_minutes(model, ctx.load_min + ewh_bus, pv_bus)
    return Realization(heater_kw, soc, unmet, curtail, per_step, net, sim)


def price_outcome(ctx, problem, B, real, cfg):
    """Cost report of one realised day."""
    fl = ctx.fleet
    spot_min = np.repeat(ctx.spot, ctx.load_min.shape[0] // ctx.spot.shape[0])
    passive = float(spot_min @ ctx.load_min.sum(axis=1) / 60.0)
    charging = float((ctx.spot * DT_HOURS * real.heater_kw.sum(axis=0)).sum())
    s_on, s_off = transitions(problem, B)
    sizes = np.array([len(m) for m in problem.ewh_members], dtype=float)
    switches = float(sizes @ (s_on + s_off).sum(axis=1))
    shed = real.shed_energy
    sim = real.simulation
    return CostReport(
        passive_cost=passive, charging_cost=charging, shed_energy=shed,
        shed_cost=cfg.shed_cost * shed, switch_count=switches,
        switching_penalty=cfg.switch_cost * float((s_on + s_off).sum()),
        losses_kwh=sim.losses_kwh if sim is not None else 0.0,
        violation_minutes=float(sim.violation_minutes) if sim is not None else 0.0,
        unmet_kwh=float(real.unmet_kwh.sum()), pv_kwh=float(ctx.pv_min.sum() / 60.0),
        consumption_kwh=float(ctx.load_min.sum() / 60.0 + real.heater_kw.sum() * DT_HOURS),
        heater_days=float(fl.n_ewh))


# -------------------------------------------------------------- controllers

def mpc_template(ctx, cfg):
    """Problem with mean load and smoothed actual PV that forecasts are applied to."""
    return day_problem(ctx, cfg, basis="smooth")


def day_traces(ctx, cfg):
    pu = ctx.dataset.pv_pu[ctx.index]
    fc = cfg.forecast.__class__(**{**asdict(cfg.forecast), "seed": cfg.forecast_seed * 1000 + ctx.doy})
    return fc, pu


def plan_day(ctx, cfg):
    """Applied group schedule ``B`` and planning details for the configured mode."""
    prob = day_problem(ctx, cfg)
    if cfg.mode == "perfect":
        sol, fb = solve_forced(prob, cfg.solver, cfg.gap, cfg.time_limit)
        return prob, sol.B, {"status": sol.status, "gap": sol.gap, "fallback": fb}, sol.objective
    template = mpc_template(ctx, cfg)
    fc, pu = day_traces(ctx, cfg)
    if cfg.mode == "day-ahead":
        sol = run_day_ahead(template, make_forecast(pu, 0, fc), cfg.solver, cfg.gap, cfg.time_limit)
        return prob, sol.B, {"status": sol.status, "fallback": sol.info.get("fallback")}, sol.objective
    res = run_mpc_day(template, hourly_traces(pu, fc), cfg.solver, cfg.gap, cfg.time_limit)
    return prob, res.B, {"fallback_hours": res.fallbacks, "mpc": res}, float("nan")


def run_day(ctx, cfg):
    prob, B, info, obj = plan_day(ctx, cfg)
    real = realize(ctx, prob, B, cfg)
    rep = price_outcome(ctx, prob, B, real, cfg)
    return DayResult(ctx.dataset.days[ctx.index], B, prob, real, rep, obj, info)


# ----------------------------------------------------------------- scenario

@dataclass
class ScenarioResult:
    config: ScenarioConfig
    penetration: float
    kwp_total: float
    days: list                       # DayResult per sample day
    weights: np.ndarray
    households: int

    @property
    def report(self):
        """Weighted (yearly) totals."""
        out = CostReport()
        for d, w in zip(self.days, self.weights):
            out = out + d.report.scaled(w)
        return out

    @property
    def daily(self):
        """Plain sum over the simulated days."""
        out = CostReport()
        for d in self.days:
            out = out + d.report
        return out

    def summary(self):
        rep = self.report
        return {"penetration": self.penetration, "kwp_total": self.kwp_total,
                "kwp_per_household": self.kwp_total / self.households,
                **rep.to_dict()}


def run_scenario(model, dataset, cfg, days=None, kwp_total=None):
    """Run the configured controller over the dataset's days.

    ``kwp_total`` overrides the installed PV otherwise derived from
    ``cfg.penetration``.
    """
    kwp = dataset.kwp_for_penetration(cfg.penetration) if kwp_total is None else kwp_total
    fleet = make_fleet(model, dataset, kwp)
    idx = range(dataset.n_days) if days is None else list(days)
    results = [run_day(day_context(model, dataset, fleet, d, cfg.soc_seed), cfg) for d in idx]
    return ScenarioResult(cfg, dataset.penetration(kwp), kwp, results,
                          np.asarray(dataset.weights)[list(idx)], int(dataset.households.sum()))
