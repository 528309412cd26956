"""Fleet-scale dispatch: per-group dynamic programming inside a Lagrangian loop.

Every heater group is scheduled by an exact DP over (on-count, status) given
the other groups. Block coordinate descent over groups gives a local optimum;
dualising the coupling ``sum_i P_i B_ik = E_k`` gives a lower bound and fresh
starting points. The result carries the certified gap.

Identical groups are solved exactly as a min-cost flow (:mod:`.flow`); with
a switching price that flow optimum seeds the search and bounds it below.
"""
import math
import time

import numpy as np

from .. import kernels
from . import flow
from .problem import FEAS_TOL, InfeasibleError, finalize

PENALTY = 1e6      # EUR per kW of transformer-limit violation


def step_cost(problem, power):
    """Charging plus shed cost of heater power ``power`` (kW per step)."""
    dt = problem.dt
    return problem.spot * dt * power + problem.shed_cost * dt * np.clip(problem.need - power, 0.0, None)


def _violation(problem, power):
    return np.clip(problem.e_min - power, 0.0, None) + np.clip(power - problem.cap, 0.0, None)


def total_cost(problem, B):
    B = np.asarray(B)
    power = problem.rating @ B.astype(float)
    prev = np.concatenate([problem.b_init[:, None], B[:, :-1]], axis=1)
    sw = float(np.abs(B.astype(np.int64) - prev).sum())
    return float(step_cost(problem, power).sum() + problem.switch_cost * sw)


class _Context:
    def __init__(self, problem, backend):
        self.p = problem
        self.k = backend
        self.lo, self.hi = problem.count_bounds()
        self.all_on = np.ones(problem.n_steps, dtype=np.uint8)
        if (self.lo > self.hi).any():
            i, k = np.argwhere(self.lo > self.hi)[0]
            raise InfeasibleError(f"group {i} cannot meet its SoC limits by step {k}",
                                  constraint="soc_bounds", unit=int(i))

    def dp(self, i, cost_on, allowed=None):
        allowed = self.all_on if allowed is None else allowed
        sched, val = self.k.dp_schedule(np.ascontiguousarray(cost_on, dtype=float),
                                        np.ascontiguousarray(allowed, dtype=np.uint8),
                                        self.lo[i], self.hi[i], float(self.p.switch_cost),
                                        int(self.p.b_init[i]))
        return np.asarray(sched, dtype=np.int8), val

    def best_response(self, i, others):
        """Exact best schedule of group ``i`` with the rest fixed at power ``others``."""
        p = self.p
        off, on = others, others + p.rating[i]
        marg = step_cost(p, on) - step_cost(p, off)
        pen = PENALTY * (_violation(p, on) - _violation(p, off))
        allowed = (on <= p.cap + FEAS_TOL).astype(np.uint8)
        sched, val = self.dp(i, marg + pen, allowed)
        if not math.isfinite(val):
            sched, val = self.dp(i, marg + pen)
        if not math.isfinite(val):
            raise InfeasibleError(f"group {i} has no schedule meeting its SoC limits",
                                  constraint="soc_bounds", unit=i)
        return sched

    def descend(self, B, max_rounds=50):
        """Block coordinate descent until no group improves."""
        p = self.p
        B = B.copy()
        power = p.rating @ B.astype(float)
        best = total_cost(p, B) + PENALTY * _violation(p, power).sum()
        for _ in range(max_rounds):
            improved = False
            for i in range(p.n_units):
                others = power - p.rating[i] * B[i]
                cand = self.best_response(i, others)
                if np.array_equal(cand, B[i]):
                    continue
                trial = B.copy()
                trial[i] = cand
                t_power = others + p.rating[i] * cand
                val = total_cost(p, trial) + PENALTY * _violation(p, t_power).sum()
                if val < best - 1e-12:
                    B, power, best, improved = trial, t_power, val, True
            if not improved:
                break
        return B, best

    def greedy(self, order):
        p = self.p
        B = np.zeros((p.n_units, p.n_steps), dtype=np.int8)
        power = np.zeros(p.n_steps)
        for i in order:
            B[i] = self.best_response(i, power)
            power = power + p.rating[i] * B[i]
        return B

    def dual(self, lam):
        """Lagrangian value and subgradient at multipliers ``lam`` (EUR/kW)."""
        p = self.p
        lo_e = np.maximum(p.e_min, 0.0)
        hi_e = np.minimum(p.cap, p.rating.sum())
        cands = np.stack([lo_e, np.clip(p.need, lo_e, hi_e), hi_e])
        vals = step_cost(p, cands) - lam * cands
        j = np.argmin(vals, axis=0)
        e_star = cands[j, np.arange(p.n_steps)]
        value = float(vals.min(axis=0).sum())
        B = np.empty((p.n_units, p.n_steps), dtype=np.int8)
        for i in range(p.n_units):
            B[i], v = self.dp(i, lam * p.rating[i])
            value += v
        return value, p.rating @ B.astype(float) - e_star, B


def solve_heuristic(problem, gap_tol=1e-4, max_iter=150, time_limit=None, backend=None,
                    initial=None):
    """Good schedule plus a Lagrangian lower bound.

    Parameters
    ----------
    problem : DispatchProblem
    gap_tol : float
        Relative gap at which the search stops and the result is reported
        as optimal.
    max_iter : int
        Subgradient iterations.
    time_limit : float, optional
        Wall-clock budget in seconds.
    initial : ndarray, optional
        Starting on/off matrix, e.g. the previous MPC plan.

    Returns
    -------
    DispatchSolution
        ``status`` is ``"optimal"`` when the certified gap is within
        ``gap_tol``, otherwise ``"heuristic"``.
    """
    t0 = time.perf_counter()
    ctx = _Context(problem, backend or kernels)
    p = problem
    flow_lb, starts = -math.inf, []
    if flow.applicable(p):
        B = flow.solve_flow(p, backend=ctx.k)
        return _finish(p, B, total_cost(p, B), gap_tol, 0, t0, method="flow")
    if np.allclose(p.rating, p.rating[0], rtol=flow.RATING_RTOL, atol=0.0):
        B = flow.solve_flow(p.with_horizon(0, switch_cost=0.0), backend=ctx.k)
        flow_lb = total_cost(p.with_horizon(0, switch_cost=0.0), B)
        starts.append(B)
    starts += [ctx.greedy(range(p.n_units)),
               ctx.greedy(range(p.n_units - 1, -1, -1))]
    if initial is not None:
        starts.append(np.asarray(initial, dtype=np.int8).reshape(p.n_units, p.n_steps))
    best_B, ub = None, math.inf
    for B0 in starts:
        B, val = ctx.descend(B0)
        if val < ub:
            best_B, ub = B, val

    if p.n_units == 1:
        # the best response to nothing is already the global optimum
        return _finish(p, best_B, ub, gap_tol, 0, t0)

    power = p.rating @ best_B.astype(float)
    lam = p.spot * p.dt - p.shed_cost * p.dt * (power < p.need)
    lb, theta, stall = flow_lb, 1.0, 0
    it = 0
    for it in range(1, max_iter + 1):
        if time_limit is not None and time.perf_counter() - t0 > time_limit:
            break
        value, sub, B_lag = ctx.dual(lam)
        if value > lb + 1e-12 * max(1.0, abs(value)):
            lb, stall = value, 0
        else:
            stall += 1
            if stall >= 5:
                theta, stall = theta * 0.5, 0
        if it % 5 == 1 or it == max_iter:
            B, val = ctx.descend(B_lag)
            if val < ub:
                best_B, ub = B, val
        if (ub - lb) <= gap_tol * max(abs(ub), 1e-9) or theta < 1e-4:
            break
        norm = float(sub @ sub)
        if norm < 1e-18:
            break
        lam = lam + theta * (ub - value) / norm * sub
    return _finish(p, best_B, lb, gap_tol, it, t0)


def _finish(problem, B, lb, gap_tol, iters, t0, method="lagrangian"):
    power = problem.rating @ B.astype(float)
    if _violation(problem, power).max() > FEAS_TOL:
        raise InfeasibleError("transformer limits cannot be met by any heater schedule",
                              constraint="transformer")
    sol = finalize(problem, B, "heuristic", lower_bound=lb, solver="heuristic", nodes=iters,
                   runtime=time.perf_counter() - t0, info={"method": method})
    if sol.gap <= gap_tol:
        sol.status = "optimal"
    return sol
