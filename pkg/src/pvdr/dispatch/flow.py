"""Exact dispatch of identical heater groups as a min-cost flow.

With one rating ``P`` for every group and no switching price, the problem
is a network: each group is a chain whose arc ``k`` carries the running
on-count (bounded by the SoC limits), each step node hands out at most one
unit per group, and the source feeds the step nodes over unit segments
whose costs are the increments of the step cost at integer on-counts. The
step cost is convex in the on-count, so the flow optimum is integral and
equal to the MILP optimum.
"""
import math

import numpy as np

from .. import kernels
from .problem import FEAS_TOL, InfeasibleError

RATING_RTOL = 1e-12


def applicable(problem):
    """True when the flow model is exact for ``problem``."""
    r = problem.rating
    return problem.switch_cost == 0 and bool(np.all(np.abs(r - r[0]) <= RATING_RTOL * r[0]))


def on_count_range(problem, tol=FEAS_TOL):
    """Smallest and largest number of groups on per step."""
    P = float(problem.rating[0])
    lo = np.maximum(np.ceil((problem.e_min - tol) / P), 0).astype(np.int64)
    hi = np.minimum(np.floor((problem.cap + tol) / P), problem.n_units).astype(np.int64)
    return lo, hi


def segment_costs(problem, n_hi):
    """Cost of switching on the ``j``-th group in step ``k``, shape ``(N, n_hi)``."""
    p = problem
    P = float(p.rating[0])
    j = np.arange(n_hi + 1)[None, :] * P
    cost = (p.spot[:, None] * p.dt * j
            + p.shed_cost * p.dt * np.clip(p.need[:, None] - j, 0.0, None))
    return np.diff(cost, axis=1)


def build_network(problem):
    """Arcs, bounds and costs of the flow model.

    Node layout: ``0`` source/sink, ``1..N`` step nodes, then group chains
    where node ``1 + N + i*N + k`` holds the on-count of group ``i`` after
    step ``k``.
    """
    p = problem
    I, N = p.n_units, p.n_steps
    lo_cnt, hi_cnt = p.count_bounds()
    n_lo, n_hi = on_count_range(p)
    bad = np.flatnonzero(n_lo > n_hi)
    if bad.size:
        raise InfeasibleError(f"no on-count meets the transformer limits in step {bad[0]}",
                              constraint="transformer")
    if (lo_cnt > hi_cnt).any():
        i, k = np.argwhere(lo_cnt > hi_cnt)[0]
        raise InfeasibleError(f"group {i} cannot meet its SoC limits by step {k}",
                              constraint="soc_bounds", unit=int(i))
    seg = segment_costs(p, I)
    chain = lambda i, k: 1 + N + i * N + k
    tails, heads, lows, caps, costs = [], [], [], [], []
    # source -> step segments
    kk, jj = np.nonzero(np.arange(I)[None, :] < n_hi[:, None])
    tails.append(np.zeros(kk.size, dtype=np.int64))
    heads.append(1 + kk)
    lows.append((jj < n_lo[kk]).astype(np.int64))
    caps.append(np.ones(kk.size, dtype=np.int64))
    costs.append(seg[kk, jj])
    # step -> group chain node of the same step
    ii, kk = np.meshgrid(np.arange(I), np.arange(N), indexing="ij")
    ii, kk = ii.ravel(), kk.ravel()
    tails.append(1 + kk)
    heads.append(chain(ii, kk))
    lows.append(np.zeros(ii.size, dtype=np.int64))
    caps.append(np.ones(ii.size, dtype=np.int64))
    costs.append(np.zeros(ii.size))
    # chain arcs carry the running on-count; the last one returns to the source
    nxt = np.where(kk < N - 1, chain(ii, np.minimum(kk + 1, N - 1)), 0)
    tails.append(chain(ii, kk))
    heads.append(nxt)
    lows.append(lo_cnt.ravel().astype(np.int64))
    caps.append(hi_cnt.ravel().astype(np.int64))
    costs.append(np.zeros(ii.size))
    cat = np.concatenate
    return (1 + N + I * N, cat(tails), cat(heads), cat(lows), cat(caps), cat(costs),
            ii, kk, kk.size + 0)


def solve_flow(problem, backend=None):
    """Optimal on/off matrix ``(I, N)`` via min-cost flow.

    Raises
    ------
    ValueError
        If the groups differ in rating or switching is priced.
    InfeasibleError
        If no schedule meets the limits.
    """
    if not applicable(problem):
        raise ValueError("flow model needs equal ratings and no switching price")
    k = backend or kernels
    p = problem
    n_nodes, tail, head, low, cap, cost, ii, kk, _ = build_network(p)
    n_seg = tail.size - 2 * ii.size
    # start at the lower bounds, with every negative-cost arc saturated
    flow = np.where(cost < 0, cap, low)
    excess = np.zeros(n_nodes, dtype=np.int64)
    np.add.at(excess, head, flow)
    np.subtract.at(excess, tail, flow)
    delta, left = k.ssp_flow(n_nodes, tail, head, np.ascontiguousarray(cost),
                             cap - flow, flow - low, excess)
    if left:
        raise InfeasibleError("SoC limits and transformer limits admit no common schedule",
                              constraint="soc_bounds")
    flow = flow + np.asarray(delta)
    B = np.zeros((p.n_units, p.n_steps), dtype=np.int8)
    B[ii, kk] = flow[n_seg:n_seg + ii.size]
    return B
