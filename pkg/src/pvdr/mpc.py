"""Receding-horizon dispatch on hourly PV forecasts.

Every hour the dispatch is re-solved from the current SoC to midnight on
the latest forecast; only the first hour of the plan is applied. The
day-ahead variant solves once at midnight and applies the whole plan.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assets import STEPS_PER_DAY, replay_soc
from .dispatch import InfeasibleError, solve

STEPS_PER_HOUR = STEPS_PER_DAY // 24
RELAXED_LIMIT_KW = 1e9


@dataclass
class MpcState:
    hour: int
    soc_hat: np.ndarray              # (I,) SoC at the start of ``hour``
    b_prev: np.ndarray               # (I,) last applied on/off state
    applied: np.ndarray              # (I, 6 * hour) controls applied so far
    soc_trace: np.ndarray            # (I, 6 * hour + 1) realised SoC
    planned_cost: float = 0.0        # objective of the applied steps
    log: list = field(default_factory=list)


def initial_state(template):
    I = template.n_units
    return MpcState(0, template.soc0.copy(), template.b_init.copy(),
                    np.zeros((I, 0), dtype=np.int8), template.soc0[:, None].copy())


def forecast_pv(template, trace):
    """Per-group PV forecast: the template's (actual) PV times the error factors."""
    return template.pv * trace.factors[None, :]


def solve_forced(problem, solver="heuristic", gap=1e-4, time_limit=None):
    """Solve, falling back to shedding when the limits leave no schedule.

    The first fallback drops the backflow limit from the plan, leaving the
    real-time limiter to shed; the second also lifts the forward limit.
    Returns the solution and the fallback used (``None`` when none was).
    """
    tries = [(None, {}), ("forced_shed", {"p_min": -RELAXED_LIMIT_KW}),
             ("relaxed_limits", {"p_min": -RELAXED_LIMIT_KW, "p_max": RELAXED_LIMIT_KW})]
    err = None
    for name, change in tries:
        prob = problem.with_horizon(0, **change) if change else problem
        try:
            return solve(prob, solver=solver, gap=gap, time_limit=time_limit), name
        except InfeasibleError as exc:
            err = exc
    raise err


def horizon_problem(template, state, pv_forecast, steps_per_hour=STEPS_PER_HOUR):
    """Shrunk problem from the state's hour to midnight."""
    k0 = state.hour * steps_per_hour
    return template.with_horizon(k0, soc0=state.soc_hat, b_init=state.b_prev,
                                 pv=pv_forecast[:, k0:])


def mpc_step(state, trace, template, solver="heuristic", gap=1e-4, time_limit=None,
             steps_per_hour=STEPS_PER_HOUR):
    """Plan to midnight on ``trace`` and apply the first hour.

    Returns
    -------
    controls : ndarray
        (I, steps_per_hour) on/off decisions for the hour.
    state : MpcState
        State at the next hour; SoC advanced with the actual draws.
    solution : DispatchSolution
        The full-horizon plan.
    """
    k0 = state.hour * steps_per_hour
    if k0 >= template.n_steps:
        raise ValueError("the day is already over")
    prob = horizon_problem(template, state, forecast_pv(template, trace), steps_per_hour)
    sol, fallback = solve_forced(prob, solver, gap, time_limit)
    controls = sol.B[:, :steps_per_hour]
    n = controls.shape[1]
    soc = replay_soc(state.soc_hat, template.rating, controls, template.dt,
                     template.draws[:, k0:k0 + n])
    applied_cost = float((template.spot[k0:k0 + n] * template.dt
                          * (template.rating @ controls.astype(float))).sum())
    log = state.log + [{"hour": state.hour, "steps": prob.n_steps, "status": sol.status,
                        "gap": sol.gap, "fallback": fallback, "soc_start": sol.soc[:, 0].copy()}]
    new = MpcState(state.hour + 1, soc[:, -1].copy(), controls[:, -1].astype(np.int64),
                   np.concatenate([state.applied, controls], axis=1),
                   np.concatenate([state.soc_trace, soc[:, 1:]], axis=1),
                   state.planned_cost + applied_cost, log)
    return controls, new, sol


@dataclass
class MpcResult:
    B: np.ndarray                    # (I, N) applied controls
    soc: np.ndarray                  # (I, N+1)
    log: list
    solutions: list

    @property
    def fallbacks(self):
        return [e["hour"] for e in self.log if e["fallback"]]


def run_mpc_day(template, traces, solver="heuristic", gap=1e-4, time_limit=None,
                steps_per_hour=STEPS_PER_HOUR):
    """Hourly MPC over one day; ``traces[h]`` is the forecast issued at hour ``h``."""
    state = initial_state(template)
    sols = []
    hours = -(-template.n_steps // steps_per_hour)
    if len(traces) < hours:
        raise ValueError(f"{hours} hourly forecasts needed, got {len(traces)}")
    for h in range(hours):
        _, state, sol = mpc_step(state, traces[h], template, solver, gap, time_limit, steps_per_hour)
        sols.append(sol)
    return MpcResult(state.applied, state.soc_trace, state.log, sols)


def run_day_ahead(template, trace, solver="heuristic", gap=1e-4, time_limit=None):
    """Open-loop plan from the midnight forecast, applied for the whole day."""
    prob = template.with_horizon(0, pv=forecast_pv(template, trace))
    sol, fallback = solve_forced(prob, solver, gap, time_limit)
    sol.info = dict(sol.info or {}, fallback=fallback)
    return sol
