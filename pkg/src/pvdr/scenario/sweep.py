"""Parameter sweeps: one scenario run per grid point, tabulated.

Kinds: ``grouping-ewh`` and ``grouping-pv`` (number of control groups),
``switching-penalty`` (EUR per switching action), ``penetration-losses``
(PV penetration) and ``forecast`` (controller mode).
"""
from __future__ import annotations

import csv
import json
import math
import traceback
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ..dispatch import SHED_COST
from ..dispatch.heuristic import total_cost
from .fleet import make_fleet
from .runner import (MODES, DayResult, ScenarioConfig, ScenarioResult, day_context, day_problem,
                     plan_day, price_outcome, realize, run_scenario)

KINDS = ("grouping-ewh", "grouping-pv", "switching-penalty", "penetration-losses", "forecast")
DEFAULT_GRIDS = {
    "grouping-ewh": [20, 10, 5, 4, 2, 1],
    "grouping-pv": [20, 10, 5, 4, 2, 1],
    # EUR per action, as multiples of the shed price of one kWh
    "switching-penalty": [round(f * SHED_COST, 6) for f in (0.0, 0.1, 0.25, 0.5, 1.0, 2.0)],
    "penetration-losses": [0.0, 0.1, 0.2, 0.241, 0.3, 0.4, 0.5, 0.6, 0.7],
    "forecast": list(MODES),
}
_PARAM = {"grouping-ewh": "n_ewh_groups", "grouping-pv": "n_pv_groups",
          "switching-penalty": "switch_cost", "penetration-losses": "penetration",
          "forecast": "mode"}


def _row(kind, value, result):
    rep = result.report
    return {"kind": kind, "value": value, "penetration": result.penetration,
            "kwp_total": result.kwp_total, **rep.to_dict(),
            "yearly_consumption_kwh": rep.consumption_kwh, "error": ""}


def _switching_runs(model, dataset, cfg, grid, days):
    """Switching-penalty runs sharing their schedules across the grid.

    Every grid point is solved on its own; then each penalty takes, day by
    day, the cheapest of all schedules found (priced at that penalty). The
    chosen switch count is therefore non-increasing in the penalty.
    """
    kwp = dataset.kwp_for_penetration(cfg.penetration)
    fleet = make_fleet(model, dataset, kwp)
    idx = list(range(dataset.n_days) if days is None else days)
    ctxs = [day_context(model, dataset, fleet, d, cfg.soc_seed) for d in idx]
    cfgs = [cfg.replace(switch_cost=float(c)) for c in grid]
    found = {}
    for j, c in enumerate(cfgs):
        for i, ctx in enumerate(ctxs):
            try:
                prob, B, info, _ = plan_day(ctx, c)
                found.setdefault(i, []).append(B)
            except Exception:  # recorded when the row is priced
                pass
    out = []
    for c in cfgs:
        days_out = []
        for i, ctx in enumerate(ctxs):
            prob = day_problem(ctx, c)
            cands = found.get(i, [])
            if not cands:
                raise RuntimeError(f"no schedule for day {ctx.dataset.days[ctx.index]}")
            vals = [total_cost(prob, B) for B in cands]
            B = cands[int(np.argmin(vals))]
            real = realize(ctx, prob, B, c)
            rep = price_outcome(ctx, prob, B, real, c)
            days_out.append(DayResult(ctx.dataset.days[ctx.index], B, prob, real, rep,
                                      float(min(vals)), {"candidates": len(cands)}))
        out.append(ScenarioResult(c, dataset.penetration(kwp), kwp, days_out,
                                  np.asarray(dataset.weights)[idx], int(dataset.households.sum())))
    return out


def _point(args):
    model, dataset, kind, v, cfg, days = args
    try:
        res = run_scenario(model, dataset, cfg.replace(**{_PARAM[kind]: v}), days=days)
        return _row(kind, v, res), res
    except Exception as exc:
        return ({"kind": kind, "value": v, "error": f"{type(exc).__name__}: {exc}",
                 "trace": traceback.format_exc(limit=2)}, None)


def sweep(model, dataset, kind, grid=None, cfg=None, days=None, workers=1):
    """Table of scenario results over a parameter grid.

    Failures of single grid points are recorded in the row's ``error``
    field and the sweep carries on. With ``workers > 1`` the grid points
    run in separate processes; the table is the same as a serial run.

    Returns
    -------
    rows : list of dict
    results : list of ScenarioResult or None
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    grid = list(DEFAULT_GRIDS[kind] if grid is None else grid)
    cfg = cfg or ScenarioConfig()
    if kind == "switching-penalty":
        try:
            results = _switching_runs(model, dataset, cfg, grid, days)
            return [_row(kind, v, r) for v, r in zip(grid, results)], results
        except Exception:
            pass  # fall back to independent points so the failing one is isolated
    jobs = [(model, dataset, kind, v, cfg, days) for v in grid]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            out = list(pool.map(_point, jobs))
    else:
        out = [_point(j) for j in jobs]
    return [r for r, _ in out], [res for _, res in out]


def write_table(rows, path):
    """CSV or JSON by file extension."""
    path = str(path)
    if path.endswith(".json"):
        with open(path, "w") as fh:
            json.dump(rows, fh, indent=2, default=_jsonable)
        return
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys and k != "trace"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in keys})


def _fmt(v):
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)
