"""Best-first branch-and-bound on the heater on/off variables.

Node bounds come from the LP relaxation solved by :mod:`.simplex`; each child
reuses its parent's basis. The incumbent starts from the heuristic solver and
improves through integral LP solutions and rounding.
"""
import heapq
import math
import time
from dataclasses import dataclass

import numpy as np

from .heuristic import solve_heuristic, total_cost, _violation
from .problem import FEAS_TOL, InfeasibleError, SolverLimitError, finalize
from .simplex import DualSimplex

INT_TOL = 1e-7
MEMORY_LIMIT = 2.5e7        # tableau entries; larger problems fall back to the heuristic
KEEP_BINV = 40_000          # store the basis inverse with open nodes up to this size


def build_lp(problem):
    """LP relaxation data ``(A, c, col_lo, col_hi, row_lo, row_hi)``.

    Columns are ``B`` (group-major), total shed per step and, when switching
    is priced, on and off actions. SoC limits enter as bounds on the running
    on-count of each group, rounded to integers.
    """
    p = problem
    I, N = p.n_units, p.n_steps
    n_b = I * N
    sw = p.switch_cost > 0
    n = n_b + N + (2 * n_b if sw else 0)
    lo_cnt, hi_cnt = p.count_bounds()
    m = n_b + N + (n_b if sw else 0)
    A = np.zeros((m, n))
    tri = np.tril(np.ones((N, N)))
    for i in range(I):
        A[i * N:(i + 1) * N, i * N:(i + 1) * N] = tri
        A[n_b + np.arange(N), i * N + np.arange(N)] = p.rating[i]
    A[n_b + np.arange(N), n_b + np.arange(N)] = 1.0
    row_lo = np.concatenate([lo_cnt.ravel().astype(float), p.need])
    row_hi = np.concatenate([hi_cnt.ravel().astype(float), p.cap])
    c = np.concatenate([(p.spot * p.dt * p.rating[:, None]).ravel(), np.full(N, p.shed_cost * p.dt)])
    col_lo = np.zeros(n)
    col_hi = np.concatenate([np.ones(n_b), p.pv_total, np.ones(2 * n_b if sw else 0)])
    if sw:
        r0, on0, off0 = n_b + N, n_b + N, 2 * n_b + N
        rows = r0 + np.arange(n_b)
        idx = np.arange(n_b)
        A[rows, idx] = 1.0
        prev = idx[idx % N != 0]
        A[r0 + prev, prev - 1] = -1.0
        A[rows, on0 + idx] = -1.0
        A[rows, off0 + idx] = 1.0
        rhs = np.zeros(n_b)
        rhs[::N] = p.b_init
        row_lo = np.concatenate([row_lo, rhs])
        row_hi = np.concatenate([row_hi, rhs])
        c = np.concatenate([c, np.full(2 * n_b, p.switch_cost)])
    # a lower on-count bound above the upper one leaves the LP infeasible, which is the answer
    return A, c, col_lo, col_hi, row_lo, row_hi


def lp_shape(problem):
    """Rows and columns of :func:`build_lp` without building it."""
    n_b = problem.n_units * problem.n_steps
    sw = problem.switch_cost > 0
    return n_b + problem.n_steps + (n_b if sw else 0), n_b + problem.n_steps + (2 * n_b if sw else 0)


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    lo: np.ndarray = None
    hi: np.ndarray = None
    x: np.ndarray = None
    basic: np.ndarray = None
    at_upper: np.ndarray = None
    binv: np.ndarray = None


def _integral(problem, B):
    """Objective of an integral on/off matrix, or inf when it breaks a limit."""
    lo, hi = problem.count_bounds()
    cnt = np.cumsum(B, axis=1)
    if (cnt < lo).any() or (cnt > hi).any():
        return math.inf
    if _violation(problem, problem.rating @ B.astype(float)).max() > FEAS_TOL:
        return math.inf
    return total_cost(problem, B)


def solve_bnb(problem, gap_tol=1e-4, time_limit=None, max_nodes=None, memory_limit=MEMORY_LIMIT,
              warm_start=True):
    """Branch-and-bound with LP relaxation bounds.

    Parameters
    ----------
    problem : DispatchProblem
    gap_tol : float
        Relative gap ``(objective - bound) / |objective|`` at which the search
        stops.
    time_limit : float, optional
        Seconds; on expiry the incumbent is returned with the best bound
        and status ``"gap"``.
    max_nodes : int, optional
        Node budget, handled like the time limit.
    memory_limit : float
        Largest LP tableau (rows x columns) attempted; bigger problems return
        the heuristic schedule with its Lagrangian bound.
    warm_start : bool
        Seed the incumbent with the heuristic solver. Without it the tree
        search starts from scratch (mainly for testing).

    Returns
    -------
    DispatchSolution
    """
    t0 = time.perf_counter()
    p = problem
    I, N = p.n_units, p.n_steps
    n_b = I * N
    remaining = None if time_limit is None else max(0.0, time_limit)

    inc_B, ub, lag_lb = None, math.inf, -math.inf
    m, n = lp_shape(p)
    too_big = m * (n + m) > memory_limit
    if warm_start or too_big:
        try:
            h = solve_heuristic(p, gap_tol=gap_tol, max_iter=60,
                                time_limit=None if remaining is None else 0.3 * remaining)
            inc_B, ub, lag_lb = h.B.astype(np.int8), h.objective, h.lower_bound
        except InfeasibleError:
            pass

    if too_big:
        if inc_B is None:
            raise InfeasibleError("no feasible schedule found", constraint="transformer")
        return _result(p, inc_B, ub, lag_lb, gap_tol, t0, 0, fallback="memory")
    if inc_B is not None and _gap(ub, lag_lb) <= gap_tol:
        return _result(p, inc_B, ub, lag_lb, gap_tol, t0, 0)

    A, c, col_lo, col_hi, row_lo, row_hi = build_lp(p)

    lp = DualSimplex(A, c, row_lo, row_hi)
    keep_binv = m * m <= KEEP_BINV
    root = lp.solve(col_lo, col_hi)
    if root.status != "optimal":
        if inc_B is not None:
            return _result(p, inc_B, ub, lag_lb, gap_tol, t0, 1, lp_status=root.status)
        raise InfeasibleError("LP relaxation is infeasible", constraint="soc_bounds")

    seq = 0
    heap = [_Node(root.objective, seq, col_lo.copy(), col_hi.copy(), root.x, root.basic,
                  root.at_upper, root.binv if keep_binv else None)]
    nodes, limit_hit = 1, None
    while heap:
        if _gap(ub, max(heap[0].bound, lag_lb)) <= gap_tol:
            break
        if time_limit is not None and time.perf_counter() - t0 > time_limit:
            limit_hit = "time"
            break
        if max_nodes is not None and nodes >= max_nodes:
            limit_hit = "nodes"
            break
        node = heapq.heappop(heap)
        if node.bound >= ub - 1e-12 * max(1.0, abs(ub)):
            continue
        xb = node.x[:n_b]
        frac = np.abs(xb - np.round(xb))
        if frac.max() <= INT_TOL:
            B = np.round(xb).astype(np.int8).reshape(I, N)
            val = _integral(p, B)
            if val < ub:
                inc_B, ub = B, val
            continue
        rounded = np.round(xb).astype(np.int8).reshape(I, N)
        val = _integral(p, rounded)
        if val < ub:
            inc_B, ub = rounded, val
        j = int(np.argmin(np.abs(xb - 0.5)))
        binv = node.binv
        if binv is None:
            binv = np.linalg.inv(lp.basis_matrix(node.basic))
        for on in (1, 0):
            lo, hi = node.lo.copy(), node.hi.copy()
            lo[j] = hi[j] = float(on)
            res = lp.solve(lo, hi, node.basic, node.at_upper, binv)
            nodes += 1
            if res.status == "iteration_limit":
                raise SolverLimitError("LP relaxation hit its iteration limit")
            if res.status != "optimal" or res.objective >= ub - 1e-12 * max(1.0, abs(ub)):
                continue
            seq += 1
            heapq.heappush(heap, _Node(res.objective, seq, lo, hi, res.x, res.basic,
                                       res.at_upper, res.binv if keep_binv else None))
    if inc_B is None and limit_hit:
        raise SolverLimitError(f"{limit_hit} limit reached before a schedule was found")
    if inc_B is None:
        raise InfeasibleError("no integral schedule satisfies the constraints",
                              constraint="soc_bounds")
    lb = ub if not heap else min(ub, heap[0].bound)
    lb = max(lb, lag_lb) if heap else ub
    return _result(p, inc_B, ub, lb, gap_tol, t0, nodes, limit=limit_hit)


def _gap(ub, lb):
    if not math.isfinite(ub):
        return math.inf
    return (ub - lb) / max(abs(ub), 1e-9)


def _result(problem, B, ub, lb, gap_tol, t0, nodes, **info):
    sol = finalize(problem, B, "optimal", lower_bound=lb, solver="bnb", nodes=nodes,
                   runtime=time.perf_counter() - t0, info={k: v for k, v in info.items() if v})
    sol.status = "optimal" if sol.gap <= gap_tol else "gap"
    return sol
