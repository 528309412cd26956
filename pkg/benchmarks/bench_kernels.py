"""Compiled vs pure-Python kernels on representative inputs.

Each case runs through both backends, checks that they agree and prints the
median wall time. Run with ``python benchmarks/bench_kernels.py [--repeat N]``.
"""
import argparse
import statistics
import time

import numpy as np

from pvdr import kernels
from pvdr.dispatch.exact import solve_exact
from pvdr.dispatch.flow import solve_flow
from pvdr.dispatch.heuristic import solve_heuristic
from pvdr.dispatch.problem import DispatchProblem
from pvdr.grid import SWEEP_MAX_ITER, SWEEP_TOL, _to_internal, default_feeder
from pvdr.scenario.data import synth_dataset
from pvdr.scenario.fleet import make_fleet
from pvdr.scenario.runner import ScenarioConfig, day_context, day_problem


def _timed(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), out


def sweep_case():
    """One day of minute power flows on the shipped feeder."""
    model = default_feeder()
    rng = np.random.default_rng(1)
    T = 1440
    p = rng.uniform(-15.0, 12.0, (T, model.n_buses))
    p[:, 0] = 0.0
    args = (model._parent, model._z.real.copy(), model._z.imag.copy(),
            _to_internal(model, p), np.zeros((T, model.n_buses)), model.busbar_voltage,
            SWEEP_TOL, SWEEP_MAX_ITER)

    def run(k):
        vr, vi, it, loss = k.sweep_batch(*args)
        return np.hypot(vr, vi)
    return "sweep_batch (1440 flows, 21 buses)", run, lambda a, b: float(np.abs(a - b).max())


def fleet_problem(switch_cost=0.0):
    model = default_feeder()
    ds = synth_dataset(0, days=[160])
    fleet = make_fleet(model, ds, ds.kwp_for_penetration(0.7))
    ctx = day_context(model, ds, fleet, 0)
    return day_problem(ctx, ScenarioConfig(switch_cost=switch_cost))


def flow_case():
    prob = fleet_problem()
    return ("ssp_flow (20 groups x 144 steps)", lambda k: solve_flow(prob, backend=k),
            lambda a, b: float(np.abs(a.astype(int) - b.astype(int)).sum()))


def heuristic_case():
    prob = fleet_problem(switch_cost=0.05)
    return ("dp_schedule via heuristic (c_sw > 0)",
            lambda k: solve_heuristic(prob, max_iter=20, backend=k).objective,
            lambda a, b: abs(a - b))


def exact_case():
    rng = np.random.default_rng(3)
    I, N = 3, 8
    prob = DispatchProblem(
        spot=rng.uniform(0.02, 0.12, N), load=rng.uniform(2, 8, N),
        pv=15 * np.sin(np.linspace(0.2, np.pi - 0.2, N))[None, :], rating=np.full(I, 4.5),
        draws=rng.uniform(0, 0.6, (I, N)), soc0=rng.uniform(2, 7, I), soc_max=np.full(I, 10.0),
        soc_terminal=np.full(I, 1.0), p_min=-3.0, p_max=60.0, dt=1 / 6, switch_cost=0.01)
    return ("enumerate_best (24 binaries)", lambda k: solve_exact(prob, backend=k).objective,
            lambda a, b: abs(a - b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; run `python setup.py build_ext --inplace`")
    print(f"{'kernel':44s} {'python s':>10s} {'compiled s':>11s} {'speedup':>8s} {'max diff':>10s}")
    for case in (sweep_case, flow_case, heuristic_case, exact_case):
        name, run, diff = case()
        t_py, out_py = _timed(lambda: run(backends["python"]), args.repeat)
        if "compiled" in backends:
            t_c, out_c = _timed(lambda: run(backends["compiled"]), args.repeat)
            print(f"{name:44s} {t_py:10.4f} {t_c:11.4f} {t_py / t_c:8.1f} {diff(out_py, out_c):10.2e}")
        else:
            print(f"{name:44s} {t_py:10.4f} {'-':>11s} {'-':>8s} {'-':>10s}")


if __name__ == "__main__":
    main()
