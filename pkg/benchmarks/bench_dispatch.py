"""Dispatch solver timings on a fleet-scale synthetic day.

Two heater groups over 144 steps without a switching price, solved by
branch-and-bound with and without the heuristic warm start, plus the
heuristic itself at 20 groups with and without a switching price.
"""
import time

from pvdr.dispatch import solve_bnb, solve_heuristic
from pvdr.grid import default_feeder
from pvdr.scenario.data import synth_dataset
from pvdr.scenario.fleet import make_fleet
from pvdr.scenario.runner import ScenarioConfig, day_context, day_problem


def day(n_groups, switch_cost=0.0, doy=160):
    model = default_feeder()
    ds = synth_dataset(0, days=[doy])
    fleet = make_fleet(model, ds, ds.kwp_for_penetration(0.7))
    return day_problem(day_context(model, ds, fleet, 0),
                       ScenarioConfig(n_ewh_groups=n_groups, switch_cost=switch_cost))


def main():
    print(f"{'case':48s} {'seconds':>8s} {'status':>9s} {'gap':>9s} {'nodes':>6s}")
    p2 = day(2)
    for warm in (True, False):
        t0 = time.perf_counter()
        s = solve_bnb(p2, gap_tol=5e-3, time_limit=60, warm_start=warm)
        name = f"bnb, 2 groups x 144, warm start {'on' if warm else 'off'}"
        print(f"{name:48s} {time.perf_counter() - t0:8.3f} {s.status:>9s} {s.gap:9.2e} {s.nodes:6d}")
    for c_sw in (0.0, 0.0342):
        p20 = day(20, c_sw)
        t0 = time.perf_counter()
        s = solve_heuristic(p20)
        name = f"heuristic, 20 groups x 144, c_sw {c_sw}"
        print(f"{name:48s} {time.perf_counter() - t0:8.3f} {s.status:>9s} {s.gap:9.2e} {s.nodes:6d}")


if __name__ == "__main__":
    main()
