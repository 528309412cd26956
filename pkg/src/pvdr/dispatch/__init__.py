"""Day-ahead dispatch of water-heater groups and PV shedding."""
from .bnb import solve_bnb
from .exact import solve_exact
from .flow import solve_flow
from .heuristic import solve_heuristic
from .problem import (SHED_COST, DispatchProblem, DispatchSolution, FleetInputs, InfeasibleError,
                      SolverLimitError, build_problem, check_feasible, finalize, round_robin)
from .shedding import Curtailment, apply_shedding

SOLVERS = ("exact", "bnb", "heuristic")


def solve(problem, solver="heuristic", gap=1e-4, time_limit=None, **kw):
    """Solve ``problem`` with the named solver.

    ``exact`` enumerates (oracle scale only), ``bnb`` runs branch-and-bound
    on LP bounds and ``heuristic`` the fleet-scale DP/Lagrangian search,
    which is exact through min-cost flow for identical groups without a
    switching price.
    """
    if solver == "exact":
        return solve_exact(problem, **kw)
    if solver == "bnb":
        return solve_bnb(problem, gap_tol=gap, time_limit=time_limit, **kw)
    if solver == "heuristic":
        return solve_heuristic(problem, gap_tol=gap, time_limit=time_limit, **kw)
    raise ValueError(f"unknown solver {solver!r}; choose from {', '.join(SOLVERS)}")


__all__ = ["SOLVERS", "SHED_COST", "Curtailment", "DispatchProblem", "DispatchSolution", "FleetInputs",
           "InfeasibleError", "SolverLimitError", "apply_shedding", "build_problem", "check_feasible", "finalize",
           "round_robin", "solve", "solve_bnb", "solve_exact", "solve_flow", "solve_heuristic"]
