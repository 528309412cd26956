"""Turning per-step shed targets into per-plant, per-minute curtailment."""
import itertools
from dataclasses import dataclass

import numpy as np

from ..assets import STEPS_PER_DAY

EXACT_SUBSETS = 16      # enumerate switch-off sets up to this many groups


@dataclass
class Curtailment:
    curtail: np.ndarray         # (plants, minutes) kW removed
    shed: np.ndarray            # (N,) realised shed, kW step average
    capped: np.ndarray          # (N,) bool, target exceeded what could be shed

    @property
    def energy_kwh(self):
        return float(self.curtail.sum() / 60.0)


def _step_mean(minutes, n_steps):
    per = minutes.shape[-1] // n_steps
    return minutes.reshape(*minutes.shape[:-1], n_steps, per).mean(axis=-1), per


def _cheapest_cover(outputs, need):
    """Groups with the least total output whose combined output covers ``need``.

    ``outputs`` is (S, P) and ``need`` (P,): the cover must hold at every one
    of the P sample points (one step average, or every minute of a step).
    """
    S = outputs.shape[0]
    cost = outputs.sum(axis=1)
    if S <= EXACT_SUBSETS:
        codes = np.arange(1, 1 << S)
        mask = ((codes[:, None] >> np.arange(S)) & 1).astype(float)
        ok = ((mask @ outputs) >= need[None, :] - 1e-12).all(axis=1)
        if not ok.any():
            return np.arange(S)
        tot = mask @ cost
        best = np.flatnonzero(ok)[np.argmin(tot[ok])]
        return np.flatnonzero(mask[best])
    # many groups: largest first, then drop members that are not needed
    order = list(np.argsort(-cost, kind="stable"))
    chosen = []
    for j in order:
        chosen.append(j)
        if (outputs[chosen].sum(axis=0) >= need - 1e-12).all():
            break
    for j in sorted(chosen, key=lambda j: cost[j]):
        rest = [c for c in chosen if c != j]
        if rest and (outputs[rest].sum(axis=0) >= need - 1e-12).all():
            chosen = rest
    return np.array(sorted(chosen))


def apply_shedding(shed, pv_minutes, members, rampable, n_steps=STEPS_PER_DAY):
    """Per-plant minute curtailment that realises shed targets.

    Parameters
    ----------
    shed : ndarray
        Shed target in kW. Per group and step ``(S, N)``, feeder total per
        step ``(N,)``, or feeder total per minute ``(minutes,)`` for a
        real-time limiter.
    pv_minutes : ndarray
        Available output per plant and minute, ``(plants, minutes)``.
    members : list of list of int
        Plants in each PV group.
    rampable : bool
        True when every plant can be ramped to any level; output is then
        scaled down in proportion so the target is met exactly. Otherwise
        whole groups are switched off for the step, picking the set with the
        least output that covers the target, and the overshoot is extra shed.

    Returns
    -------
    Curtailment
    """
    pv_minutes = np.asarray(pv_minutes, dtype=float)
    shed = np.asarray(shed, dtype=float)
    T = pv_minutes.shape[1]
    per = T // n_steps
    group_pv = np.array([pv_minutes[g].sum(axis=0) for g in members])      # (S, T)
    avg, _ = _step_mean(group_pv, n_steps)                                  # (S, N)
    per_minute = shed.ndim == 1 and shed.shape[0] == T and per > 1
    if per_minute:
        need = shed.reshape(n_steps, per)                                   # (N, per)
        total = need.max(axis=1)
        capped = (shed > group_pv.sum(axis=0) + 1e-9).reshape(n_steps, per).any(axis=1)
    else:
        total = shed if shed.ndim == 1 else shed.sum(axis=0)
        capped = total > avg.sum(axis=0) + 1e-9
    factor = np.zeros((len(members), T))                                    # share of output removed
    if rampable:
        if per_minute:
            tot = group_pv.sum(axis=0)
            factor[:] = np.clip(np.divide(shed, tot, out=np.zeros(T), where=tot > 0), 0.0, 1.0)
        elif shed.ndim == 1:
            tot_avg = avg.sum(axis=0)
            frac = np.divide(total, tot_avg, out=np.zeros_like(total), where=tot_avg > 0)
            factor[:] = np.repeat(np.clip(frac, 0.0, 1.0), per)
        else:
            frac = np.divide(shed, avg, out=np.zeros_like(avg), where=avg > 0)
            capped |= (shed > avg + 1e-9).any(axis=0)
            factor = np.repeat(np.clip(frac, 0.0, 1.0), per, axis=1)
    else:
        for k in np.flatnonzero(total > 1e-12):
            sl = slice(k * per, (k + 1) * per)
            if per_minute:
                chosen = _cheapest_cover(group_pv[:, sl], need[k])
            else:
                chosen = _cheapest_cover(avg[:, k:k + 1], total[k:k + 1])
            factor[chosen, sl] = 1.0
    curtail = np.zeros_like(pv_minutes)
    for s, g in enumerate(members):
        curtail[g] = pv_minutes[g] * factor[s][None, :]
    realised = curtail.sum(axis=0).reshape(n_steps, per).mean(axis=1)
    return Curtailment(curtail, realised, capped)
