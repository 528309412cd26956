"""Closed-loop calibration of the transformer backflow limit."""
from __future__ import annotations

import numpy as np

from .data import synth_dataset
from .runner import ScenarioConfig, run_scenario

CALIBRATION_PENETRATION = 0.70
WEEK = 7


def sunniest_week(dataset):
    """Indices of the seven consecutive days with the most PV energy."""
    energy = dataset.pv_pu.sum(axis=1)
    sums = np.convolve(energy, np.ones(WEEK), mode="valid")
    start = int(np.argmax(sums))
    return list(range(start, start + WEEK))


def calibration_data(seed=0):
    """Full synthetic year and its sunniest week."""
    year = synth_dataset(seed=seed, days=range(365))
    return year, sunniest_week(year)


def week_violations(model, dataset, days, kwp_total, p_min, cfg):
    run = run_scenario(model, dataset, cfg.replace(p_min=p_min), days=days, kwp_total=kwp_total)
    return int(sum(d.report.violation_minutes for d in run.days))


def calibrate_backflow_limit(model, dataset=None, days=None, penetration=CALIBRATION_PENETRATION,
                             margin=0.001, tol_kw=0.25, cfg=None, seed=0):
    """Largest backflow (most negative ``p_min``) that keeps a week free of violations.

    The week is dispatched with perfect information and the real-time
    limiter, then checked minute by minute. Bisection runs between no
    backflow and the transformer rating; the result is pulled ``margin``
    (relative) toward zero.

    Returns
    -------
    p_min : float
    report : dict
    """
    cfg = cfg or ScenarioConfig(mode="perfect")
    if dataset is None:
        dataset, days = calibration_data(seed)
    elif days is None:
        days = sunniest_week(dataset)
    kwp = dataset.kwp_for_penetration(penetration)
    count = lambda p: week_violations(model, dataset, days, kwp, p, cfg)
    safe, unsafe = 0.0, -abs(model.p_max)
    trail = []
    v_safe = count(safe)
    trail.append((safe, v_safe))
    if v_safe:
        raise RuntimeError(f"{v_safe} violation minutes even without backflow")
    v = count(unsafe)
    trail.append((unsafe, v))
    if v == 0:
        safe = unsafe
    else:
        while safe - unsafe > tol_kw:
            mid = 0.5 * (safe + unsafe)
            v = count(mid)
            trail.append((mid, v))
            if v == 0:
                safe = mid
            else:
                unsafe = mid
    p_min = safe * (1.0 - margin)
    report = {"p_min_kw": p_min, "bracket_kw": [safe, unsafe], "penetration": penetration,
              "kwp_total": kwp, "days": [str(dataset.days[d]) for d in days],
              "trail": [{"p_min_kw": p, "violation_minutes": n} for p, n in trail]}
    return p_min, report


def build_default_feeder(seed=0, penetration=CALIBRATION_PENETRATION):
    """Calibrate impedances and then the backflow limit of the shipped feeder.

    Returns the model and a report with both calibration steps; the CLI
    ``calibrate`` command writes the model as the feeder config.
    """
    from dataclasses import replace

    from ..grid import calibrate_feeder, double_feeder_template

    model, imp = calibrate_feeder(double_feeder_template())
    p_min, back = calibrate_backflow_limit(model, penetration=penetration, seed=seed)
    return replace(model, p_min=p_min), {"impedance": imp, "backflow": back}
