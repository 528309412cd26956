"""PV hosting capacity by bisection on the installed PV.

``dachcz``: zero load and every plant at peak output. ``correlation``: the
measured passive load and PV minute by minute, no demand response.
``dr``: the same days with the heaters dispatched against the backflow
limit but without any PV shedding, so the heaters alone must keep the
voltage in range.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..grid import RISE_LIMIT_PCT, simulate_minutes, uniform_pv_rise
from .fleet import bus_matrix, day_minutes, make_fleet
from .runner import ScenarioConfig, run_scenario

METHODS = ("dachcz", "correlation", "dr")
PENETRATION_CAP = 5.0


@dataclass
class HostingResult:
    method: str
    penetration: float
    kwp_total: float
    kwp_per_household: float
    capped: bool
    evaluations: list = field(default_factory=list)   # (penetration, violation minutes)

    def to_dict(self):
        return {"method": self.method, "penetration": self.penetration,
                "penetration_pct": 100 * self.penetration, "kwp_total": self.kwp_total,
                "kwp_per_household": self.kwp_per_household, "capped": self.capped,
                "evaluations": [{"penetration": p, "violation_minutes": v}
                                for p, v in self.evaluations]}


def dachcz_violations(model, dataset, kwp_total):
    per_hh = kwp_total / dataset.households.sum()
    return int(uniform_pv_rise(model, per_hh) > RISE_LIMIT_PCT + 1e-12)


def correlation_violations(model, dataset, kwp_total, days=None):
    fleet = make_fleet(model, dataset, kwp_total)
    total = 0
    for d in range(dataset.n_days) if days is None else days:
        load, pv = day_minutes(model, dataset, fleet, d)
        total += simulate_minutes(model, load, bus_matrix(model, fleet.pv_bus, pv)).violation_minutes
    return total


def dr_violations(model, dataset, kwp_total, days=None, cfg=None):
    cfg = (cfg or ScenarioConfig()).replace(mode="perfect", curtail=False, voltage=True)
    run = run_scenario(model, dataset, cfg, days=days, kwp_total=kwp_total)
    return int(sum(d.report.violation_minutes for d in run.days))


def hosting_capacity(model, dataset, method, tol=1e-3, start=0.25, cap=PENETRATION_CAP,
                     days=None, cfg=None):
    """Largest penetration with zero violation minutes.

    Parameters
    ----------
    model : FeederModel
    dataset : Dataset
        Days evaluated (``correlation`` and ``dr``) and the yearly energy
        used to turn installed kWp into penetration.
    method : {"dachcz", "correlation", "dr"}
    tol : float
        Bisection tolerance on penetration (0.001 = 0.1 percentage points).
    start : float
        First upper guess; it is doubled until violations appear.
    cap : float
        Penetration at which the search gives up and flags the result.

    Returns
    -------
    HostingResult
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    count = {
        "dachcz": lambda kwp: dachcz_violations(model, dataset, kwp),
        "correlation": lambda kwp: correlation_violations(model, dataset, kwp, days),
        "dr": lambda kwp: dr_violations(model, dataset, kwp, days, cfg),
    }[method]
    trail = []

    def bad(pen):
        v = count(dataset.kwp_for_penetration(pen))
        trail.append((pen, v))
        return v > 0

    lo, hi, capped = 0.0, min(start, cap), False
    while not bad(hi):
        lo = hi
        if hi >= cap:
            capped = True
            break
        hi = min(2.0 * hi, cap)
    if not capped:
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if bad(mid):
                hi = mid
            else:
                lo = mid
    kwp = dataset.kwp_for_penetration(lo)
    return HostingResult(method, lo, kwp, kwp / dataset.households.sum(), capped, trail)
