"""Exhaustive enumeration for small instances; the reference for the other solvers."""
import time

import numpy as np

from .. import kernels
from .problem import FEAS_TOL, InfeasibleError, finalize

MAX_BINARIES = 24


def solve_exact(problem, max_binaries=MAX_BINARIES, backend=None):
    """Globally optimal schedule by enumerating every on/off pattern.

    Per-group patterns that break the SoC limits are pruned before the
    groups are combined, so the work is the product of feasible pattern
    counts rather than ``2 ** (I * N)``.
    """
    n_bin = problem.n_units * problem.n_steps
    if n_bin > max_binaries:
        raise ValueError(f"{n_bin} binaries exceed the enumeration limit of {max_binaries}")
    k = backend or kernels
    t0 = time.perf_counter()
    sched, best, n_feas = k.enumerate_best(
        np.ascontiguousarray(problem.rating), np.ascontiguousarray(problem.soc0),
        np.ascontiguousarray(problem.soc_max), np.ascontiguousarray(problem.soc_terminal),
        np.ascontiguousarray(problem.draws), np.ascontiguousarray(problem.b_init),
        float(problem.dt), np.ascontiguousarray(problem.spot), float(problem.shed_cost),
        float(problem.switch_cost), np.ascontiguousarray(problem.need),
        np.ascontiguousarray(problem.e_min), np.ascontiguousarray(problem.cap), FEAS_TOL)
    if sched is None:
        raise InfeasibleError("no on/off pattern satisfies the constraints")
    sol = finalize(problem, sched, "optimal", solver="exact", nodes=int(n_feas),
                   runtime=time.perf_counter() - t0)
    sol.lower_bound = sol.objective
    sol.gap = 0.0
    sol.info["enumerated_best"] = float(best)
    return sol
