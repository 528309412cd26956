"""Dispatch problem and solution containers, feasibility report, serialisation.

Notation: ``I`` water-heater control groups, ``S`` PV control groups, ``N``
ten-minute steps. ``B[i, k]`` is 1 while group ``i`` heats during step ``k``.
The transformer balance reads

    p_min <= load - pv + sum(shed) + sum(rating * B) <= p_max

and SoC evolves as ``soc[k+1] = soc[k] + rating * B[k] * dt - draw[k]``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..assets import DT_HOURS, replay_soc

FEED_IN_TARIFF = 0.36           # EUR/kWh
SHED_COST = 0.95 * FEED_IN_TARIFF
FEAS_TOL = 1e-9


class InfeasibleError(RuntimeError):
    """No schedule satisfies the water-heater energy constraints."""

    def __init__(self, message, constraint=None, unit=None):
        super().__init__(message)
        self.constraint = constraint
        self.unit = unit


class SolverLimitError(RuntimeError):
    """A time, node or iteration limit stopped the search before any schedule was found."""


@dataclass
class DispatchProblem:
    spot: np.ndarray                 # EUR/kWh per step
    load: np.ndarray                 # passive load, kW per step
    pv: np.ndarray                   # available PV per group, kW, (S, N)
    rating: np.ndarray               # kW per heater group, (I,)
    draws: np.ndarray                # kWh per group and step, (I, N)
    soc0: np.ndarray
    soc_max: np.ndarray
    soc_terminal: np.ndarray         # minimum end-of-day SoC
    p_min: float
    p_max: float
    dt: float = DT_HOURS
    shed_cost: float = SHED_COST
    switch_cost: float = 0.0
    b_init: np.ndarray | None = None
    ewh_members: list | None = None  # heater ids per group
    pv_members: list | None = None   # plant ids per group
    pv_rampable: bool = True

    def __post_init__(self):
        f = lambda a: np.atleast_1d(np.asarray(a, dtype=float))
        self.spot, self.load = f(self.spot), f(self.load)
        self.pv = np.atleast_2d(np.asarray(self.pv, dtype=float))
        self.rating, self.soc0, self.soc_max = f(self.rating), f(self.soc0), f(self.soc_max)
        self.soc_terminal = f(self.soc_terminal)
        self.draws = np.atleast_2d(np.asarray(self.draws, dtype=float))
        if self.b_init is None:
            self.b_init = np.zeros(self.n_units, dtype=np.int64)
        self.b_init = np.asarray(self.b_init, dtype=np.int64).reshape(-1)
        N, I = self.n_steps, self.n_units
        if N < 1:
            raise ValueError("need at least one step")
        if self.load.shape != (N,) or self.pv.shape[1] != N or self.draws.shape != (I, N):
            raise ValueError("all series must have one value per step")
        for name in ("soc0", "soc_max", "soc_terminal", "b_init"):
            if getattr(self, name).shape != (I,):
                raise ValueError(f"{name} needs one entry per heater group")
        if not self.p_min < self.p_max:
            raise ValueError("p_min must be below p_max")
        if (self.rating <= 0).any():
            raise ValueError("heater ratings must be positive")
        if (self.pv < 0).any() or (self.draws < 0).any():
            raise ValueError("PV and draws must be non-negative")
        if self.switch_cost < 0 or self.shed_cost < 0:
            raise ValueError("costs must be non-negative")

    @property
    def n_steps(self):
        return self.spot.shape[0]

    @property
    def n_units(self):
        return self.rating.shape[0]

    @property
    def n_pv_groups(self):
        return self.pv.shape[0]

    @property
    def pv_total(self):
        return self.pv.sum(axis=0)

    @property
    def need(self):
        """Heater power below which PV must be shed, per step."""
        return self.p_min - self.load + self.pv_total

    @property
    def e_min(self):
        """Lowest heater power for which shedding all PV still suffices."""
        return self.p_min - self.load

    @property
    def cap(self):
        """Highest heater power the forward transformer limit admits."""
        return self.p_max - self.load + self.pv_total

    def count_bounds(self, tol=FEAS_TOL):
        """Bounds on the number of on-steps after each step, per group.

        Returns ``lo, hi`` of shape (I, N); ``lo[i, k] <= sum(B[i, :k+1]) <= hi[i, k]``.
        """
        step = self.rating[:, None] * self.dt
        cum = np.cumsum(self.draws, axis=1)
        lo_e = cum - self.soc0[:, None]
        hi_e = self.soc_max[:, None] + cum - self.soc0[:, None]
        lo_e[:, -1] = np.maximum(lo_e[:, -1], self.soc_terminal + cum[:, -1] - self.soc0)
        lo = np.ceil(lo_e / step - tol).astype(np.int64)
        hi = np.floor(hi_e / step + tol).astype(np.int64)
        lo = np.maximum(lo, 0)
        hi = np.minimum(hi, np.arange(1, self.n_steps + 1)[None, :])
        return lo, hi

    def with_horizon(self, start, **changes):
        """Sub-problem covering steps ``start..N-1``."""
        kw = dict(spot=self.spot[start:], load=self.load[start:], pv=self.pv[:, start:],
                  rating=self.rating, draws=self.draws[:, start:], soc0=self.soc0,
                  soc_max=self.soc_max, soc_terminal=self.soc_terminal, p_min=self.p_min,
                  p_max=self.p_max, dt=self.dt, shed_cost=self.shed_cost,
                  switch_cost=self.switch_cost, b_init=self.b_init,
                  ewh_members=self.ewh_members, pv_members=self.pv_members,
                  pv_rampable=self.pv_rampable)
        kw.update(changes)
        return DispatchProblem(**kw)


@dataclass
class DispatchSolution:
    B: np.ndarray                    # (I, N) int8
    shed: np.ndarray                 # (S, N) kW
    s_on: np.ndarray
    s_off: np.ndarray
    soc: np.ndarray                  # (I, N+1)
    objective: float
    lower_bound: float
    status: str                      # optimal | gap | heuristic
    solver: str = ""
    gap: float = 0.0
    nodes: int = 0
    runtime: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def shed_energy(self):
        return float(self.shed.sum() * (1.0 / 6.0))

    @property
    def switch_count(self):
        return int(round(self.s_on.sum() + self.s_off.sum()))


def heater_power(problem, B):
    return (problem.rating[:, None] * np.asarray(B, dtype=float)).sum(axis=0)


def required_shed(problem, power):
    return np.clip(problem.need - power, 0.0, None)


def split_shed(problem, total):
    """Spread a per-step shed total over PV groups in proportion to their output."""
    pv_tot = problem.pv_total
    share = np.divide(problem.pv, pv_tot, out=np.zeros_like(problem.pv), where=pv_tot > 0)
    return share * total


def objective_value(problem, B, shed, s_on, s_off):
    B = np.asarray(B, dtype=float)
    charge = float((problem.spot * problem.dt * heater_power(problem, B)).sum())
    return (charge + float(problem.shed_cost * problem.dt * np.asarray(shed).sum())
            + problem.switch_cost * float(np.asarray(s_on).sum() + np.asarray(s_off).sum()))


def transitions(problem, B):
    B = np.asarray(B, dtype=np.int64)
    prev = np.concatenate([problem.b_init[:, None], B[:, :-1]], axis=1)
    diff = B - prev
    return np.clip(diff, 0, None).astype(float), np.clip(-diff, 0, None).astype(float)


def finalize(problem, B, status, lower_bound=-math.inf, solver="", **extra):
    """Complete solution for on/off matrix ``B`` with the cheapest shed."""
    B = np.asarray(np.round(B), dtype=np.int8).reshape(problem.n_units, problem.n_steps)
    shed = split_shed(problem, required_shed(problem, heater_power(problem, B)))
    s_on, s_off = transitions(problem, B)
    soc = replay_soc(problem.soc0, problem.rating, B, problem.dt, problem.draws)
    obj = objective_value(problem, B, shed, s_on, s_off)
    lb = min(lower_bound, obj)
    gap = (obj - lb) / max(abs(obj), 1e-9) if math.isfinite(lb) else math.inf
    return DispatchSolution(B, shed, s_on, s_off, soc, obj, lb, status, solver, gap, **extra)


# ------------------------------------------------------------- feasibility

@dataclass
class FeasibilityReport:
    residuals: dict                  # constraint -> array of non-negative residuals
    tol: float = FEAS_TOL

    @property
    def passed(self):
        return all(self.max(name) <= self.tol for name in self.residuals)

    def max(self, name):
        r = self.residuals[name]
        return float(r.max()) if r.size else 0.0

    def violations(self):
        """(constraint, index tuple, residual) for every entry above tolerance."""
        out = []
        for name, r in self.residuals.items():
            for idx in zip(*np.nonzero(r > self.tol)):
                out.append((name, tuple(int(i) for i in idx), float(r[idx])))
        return out

    def __str__(self):
        lines = [f"{name:>14}: {self.max(name):.3e}" for name in self.residuals]
        return "\n".join(lines + ["PASS" if self.passed else "FAIL"])


def check_feasible(problem, solution, tol=FEAS_TOL):
    """Residual of every dispatch constraint; all zero for a valid schedule."""
    B = np.asarray(solution.B, dtype=float)
    shed = np.asarray(solution.shed, dtype=float)
    soc = np.asarray(solution.soc, dtype=float)
    s_on, s_off = np.asarray(solution.s_on, float), np.asarray(solution.s_off, float)
    I, N = problem.n_units, problem.n_steps
    if B.shape != (I, N) or shed.shape != (problem.n_pv_groups, N) or soc.shape != (I, N + 1):
        raise ValueError("solution shapes do not match the problem")
    net = problem.load - problem.pv_total + shed.sum(axis=0) + heater_power(problem, B)
    pos = lambda a: np.clip(a, 0.0, None)
    expected = soc[:, :-1] + problem.rating[:, None] * B * problem.dt - problem.draws
    prev = np.concatenate([problem.b_init[:, None].astype(float), B[:, :-1]], axis=1)
    res = {
        "transformer": pos(np.maximum(problem.p_min - net, net - problem.p_max)),
        "soc_balance": np.abs(soc[:, 1:] - expected),
        "soc_initial": np.abs(soc[:, 0] - problem.soc0),
        "soc_bounds": pos(np.maximum(-soc, soc - problem.soc_max[:, None])),
        "soc_terminal": pos(problem.soc_terminal - soc[:, -1]),
        "shed_bounds": pos(np.maximum(-shed, shed - problem.pv)),
        "switching": np.maximum.reduce([np.abs(B - prev - s_on + s_off), pos(-s_on), pos(s_on - 1),
                                        pos(-s_off), pos(s_off - 1)]),
        "binary": np.abs(B - np.round(B)) + pos(-B) + pos(B - 1),
    }
    return FeasibilityReport(res, tol)


# ----------------------------------------------------------- serialisation

_ARRAYS = ("spot", "load", "pv", "rating", "draws", "soc0", "soc_max", "soc_terminal", "b_init")


def problem_to_dict(problem):
    out = {name: np.asarray(getattr(problem, name)).tolist() for name in _ARRAYS}
    out.update(p_min=problem.p_min, p_max=problem.p_max, dt=problem.dt,
               shed_cost=problem.shed_cost, switch_cost=problem.switch_cost,
               ewh_members=problem.ewh_members, pv_members=problem.pv_members,
               pv_rampable=problem.pv_rampable)
    return {"kind": "dispatch-problem", "version": 1, **out}


def problem_from_dict(data):
    data = dict(data)
    if data.pop("kind", "dispatch-problem") != "dispatch-problem":
        raise ValueError("not a dispatch problem document")
    data.pop("version", None)
    return DispatchProblem(**data)


_SOL_ARRAYS = ("B", "shed", "s_on", "s_off", "soc")


def solution_to_dict(solution):
    out = {name: np.asarray(getattr(solution, name)).tolist() for name in _SOL_ARRAYS}
    for name in ("objective", "lower_bound", "gap", "runtime"):
        val = float(getattr(solution, name))
        out[name] = val if math.isfinite(val) else None
    out.update(status=solution.status, solver=solution.solver, nodes=solution.nodes,
               info=solution.info)
    return {"kind": "dispatch-solution", "version": 1, **out}


def solution_from_dict(data):
    data = dict(data)
    if data.pop("kind", "dispatch-solution") != "dispatch-solution":
        raise ValueError("not a dispatch solution document")
    data.pop("version", None)
    for name in _SOL_ARRAYS:
        data[name] = np.asarray(data[name], dtype=np.int8 if name == "B" else float)
    for name in ("lower_bound", "gap"):
        if data.get(name) is None:
            data[name] = -math.inf if name == "lower_bound" else math.inf
    return DispatchSolution(**data)


def dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")


# ----------------------------------------------------------------- grouping

@dataclass
class FleetInputs:
    """Per-asset inputs for one optimisation horizon."""
    spot: np.ndarray                 # EUR/kWh per step
    load: np.ndarray                 # kW per step
    pv: np.ndarray                   # (plants, N) available kW
    pv_bus: np.ndarray               # (plants,)
    ewh_rating: np.ndarray           # (heaters,)
    ewh_bus: np.ndarray
    soc0: np.ndarray
    soc_max: np.ndarray
    draws: np.ndarray                # (heaters, N) kWh
    next_draw: np.ndarray            # (heaters,) first draw after the horizon
    p_min: float
    p_max: float
    b_init: np.ndarray | None = None
    shed_cost: float = SHED_COST
    switch_cost: float = 0.0
    dt: float = DT_HOURS


def round_robin(buses, n_groups):
    """Members of each group, dealt out in order of bus index."""
    buses = np.asarray(buses)
    if n_groups < 1:
        raise ValueError("number of groups must be at least 1")
    if n_groups > buses.size:
        raise ValueError(f"{n_groups} groups for {buses.size} assets")
    order = np.argsort(buses, kind="stable")
    return [sorted(int(j) for j in order[g::n_groups]) for g in range(n_groups)]


def build_problem(inputs, n_ewh_groups, n_pv_groups):
    """Aggregate heaters and PV plants into control groups.

    Members of a group switch together, so a group behaves like one heater
    with the summed rating, draws and stored energy. PV groups with more
    than one plant can only switch plants off entirely.
    """
    f = inputs
    ewh_groups = round_robin(f.ewh_bus, n_ewh_groups)
    pv_groups = round_robin(f.pv_bus, n_pv_groups)
    b_init = np.zeros(len(f.ewh_rating), dtype=np.int64) if f.b_init is None else np.asarray(f.b_init)
    agg = lambda a, groups: np.array([np.asarray(a)[g].sum(axis=0) for g in groups])
    return DispatchProblem(
        spot=f.spot, load=f.load, pv=agg(f.pv, pv_groups),
        rating=agg(f.ewh_rating, ewh_groups), draws=agg(f.draws, ewh_groups),
        soc0=agg(f.soc0, ewh_groups), soc_max=agg(f.soc_max, ewh_groups),
        soc_terminal=agg(f.next_draw, ewh_groups), p_min=f.p_min, p_max=f.p_max, dt=f.dt,
        shed_cost=f.shed_cost, switch_cost=f.switch_cost,
        b_init=np.array([int(b_init[g[0]]) for g in ewh_groups]),
        ewh_members=ewh_groups, pv_members=pv_groups,
        pv_rampable=all(len(g) == 1 for g in pv_groups))
