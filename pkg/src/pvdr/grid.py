"""Radial LV feeder model and backward/forward sweep power flow.

Power values handed to the solver use the *net load* convention: positive
numbers are consumption, PV in-feed is negative. Voltages are per unit of
the nominal line-to-line voltage on a balanced single-phase equivalent.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import kernels

SWEEP_TOL = 1e-8
SWEEP_MAX_ITER = 100
RISE_LIMIT_PCT = 3.0


class ConfigError(ValueError):
    """Invalid feeder or scenario configuration."""


class TopologyError(ConfigError):
    """Lines do not form a tree rooted at the busbar."""


class PowerFlowError(RuntimeError):
    def __init__(self, message, minute=None):
        super().__init__(message)
        self.minute = minute


@dataclass(frozen=True)
class Bus:
    id: int
    households: int = 10
    has_load: bool = True
    has_pv: bool = True


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    resistance: float
    reactance: float
    ampacity: float | None = None


@dataclass(frozen=True)
class FeederModel:
    buses: tuple
    lines: tuple
    busbar_voltage: float = 1.01
    nominal_voltage: float = 400.0
    base_power: float = 100.0
    transformer_rating: float = 630.0
    p_max: float = 220.0
    p_min: float = -150.0
    name: str = "feeder"
    _order: np.ndarray = field(init=False, repr=False, compare=False)
    _parent: np.ndarray = field(init=False, repr=False, compare=False)
    _z: np.ndarray = field(init=False, repr=False, compare=False)
    _line_of: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        _validate(self)
        n = len(self.buses)
        adj = {b.id: [] for b in self.buses}
        for li, ln in enumerate(self.lines):
            adj[ln.from_bus].append((ln.to_bus, li))
            adj[ln.to_bus].append((ln.from_bus, li))
        order, parent_of, line_of = [0], {0: -1}, {0: -1}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v, li in adj[u]:
                if v in parent_of:
                    if line_of[u] != li:
                        raise TopologyError(f"lines[{li}]: closes a loop at bus {v}")
                    continue
                parent_of[v] = u
                line_of[v] = li
                order.append(v)
                queue.append(v)
        if len(order) != n:
            missing = sorted(set(adj) - set(order))
            raise TopologyError(f"buses {missing} are not connected to bus 0")
        pos = {bus: k for k, bus in enumerate(order)}
        parent = np.array([-1] + [pos[parent_of[b]] for b in order[1:]], dtype=np.int64)
        zbase = self.nominal_voltage ** 2 / (self.base_power * 1e3)
        z = np.zeros(n, dtype=complex)
        for k, bus in enumerate(order[1:], start=1):
            ln = self.lines[line_of[bus]]
            z[k] = complex(ln.resistance, ln.reactance) / zbase
        object.__setattr__(self, "_order", np.array(order, dtype=np.int64))
        object.__setattr__(self, "_parent", parent)
        object.__setattr__(self, "_z", z)
        object.__setattr__(self, "_line_of", np.array([line_of[b] for b in order], dtype=np.int64))

    @property
    def n_buses(self):
        return len(self.buses)

    @property
    def households(self):
        return np.array([b.households if b.has_load else 0 for b in self.buses], dtype=float)

    @property
    def load_buses(self):
        return [b.id for b in self.buses if b.has_load]

    @property
    def pv_buses(self):
        return [b.id for b in self.buses if b.has_pv]

    def scaled(self, factor):
        """Copy with every line impedance multiplied by ``factor``."""
        lines = [replace(ln, resistance=ln.resistance * factor, reactance=ln.reactance * factor)
                 for ln in self.lines]
        return replace(self, lines=tuple(lines))


def _validate(model):
    ids = [b.id for b in model.buses]
    if ids != list(range(len(ids))):
        raise ConfigError("buses: ids must be unique and contiguous from 0 in listed order")
    if not ids:
        raise ConfigError("buses: at least the busbar is required")
    if model.buses[0].has_load or model.buses[0].has_pv:
        raise ConfigError("buses[0]: the transformer busbar carries no load or PV")
    for b in model.buses:
        if b.has_load and b.households < 1:
            raise ConfigError(f"buses[{b.id}].households: load bus needs at least one household")
    if len(model.lines) != len(ids) - 1:
        raise TopologyError(f"lines: a tree over {len(ids)} buses needs {len(ids) - 1} lines, "
                            f"got {len(model.lines)}")
    for k, ln in enumerate(model.lines):
        for end in (ln.from_bus, ln.to_bus):
            if end not in range(len(ids)):
                raise ConfigError(f"lines[{k}]: unknown bus {end}")
        if ln.from_bus == ln.to_bus:
            raise TopologyError(f"lines[{k}]: self loop at bus {ln.from_bus}")
        if not ln.resistance > 0:
            raise ConfigError(f"lines[{k}].r_ohm: must be > 0")
        if not ln.reactance > 0:
            raise ConfigError(f"lines[{k}].x_ohm: must be > 0")
    if not model.p_min < 0 < model.p_max:
        raise ConfigError("limits: need p_min_kw < 0 < p_max_kw")
    if not model.busbar_voltage > 0:
        raise ConfigError("busbar_voltage_pu: must be positive")


# ---------------------------------------------------------------- config io

_BUS_KEYS = {"id", "households", "has_load", "has_pv"}
_LINE_KEYS = {"from", "to", "r_ohm", "x_ohm", "ampacity_a"}
_TOP_KEYS = {"name", "nominal_voltage_v", "base_power_kva", "busbar_voltage_pu",
             "transformer_rating_kva", "limits", "buses", "lines", "calibration"}
_LIMIT_KEYS = {"p_max_kw", "p_min_kw"}


def _check_keys(obj, allowed, where, required=()):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    missing = [k for k in required if k not in obj]
    if missing:
        raise ConfigError(f"{where}: missing keys {missing}")


def _number(obj, key, where):
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {val!r}")
    return float(val)


def feeder_from_dict(data):
    _check_keys(data, _TOP_KEYS, "feeder", required=("buses", "lines", "limits"))
    _check_keys(data["limits"], _LIMIT_KEYS, "limits", required=("p_max_kw", "p_min_kw"))
    buses = []
    for k, b in enumerate(data["buses"]):
        where = f"buses[{k}]"
        _check_keys(b, _BUS_KEYS, where, required=("id",))
        if not isinstance(b["id"], int):
            raise ConfigError(f"{where}.id: expected an integer")
        hh = b.get("households", 10 if b["id"] else 0)
        if not isinstance(hh, int) or hh < 0:
            raise ConfigError(f"{where}.households: expected a non-negative integer")
        buses.append(Bus(b["id"], hh, bool(b.get("has_load", b["id"] != 0)),
                         bool(b.get("has_pv", b["id"] != 0))))
    lines = []
    for k, ln in enumerate(data["lines"]):
        where = f"lines[{k}]"
        _check_keys(ln, _LINE_KEYS, where, required=("from", "to", "r_ohm", "x_ohm"))
        amp = ln.get("ampacity_a")
        lines.append(Line(int(ln["from"]), int(ln["to"]), _number(ln, "r_ohm", where),
                          _number(ln, "x_ohm", where), None if amp is None else float(amp)))
    kw = {}
    for key, attr in [("busbar_voltage_pu", "busbar_voltage"), ("nominal_voltage_v", "nominal_voltage"),
                      ("base_power_kva", "base_power"), ("transformer_rating_kva", "transformer_rating")]:
        if key in data:
            kw[attr] = _number(data, key, "feeder")
    return FeederModel(tuple(buses), tuple(lines),
                       p_max=_number(data["limits"], "p_max_kw", "limits"),
                       p_min=_number(data["limits"], "p_min_kw", "limits"),
                       name=str(data.get("name", "feeder")), **kw)


def feeder_to_dict(model):
    return {
        "name": model.name,
        "nominal_voltage_v": model.nominal_voltage,
        "base_power_kva": model.base_power,
        "busbar_voltage_pu": model.busbar_voltage,
        "transformer_rating_kva": model.transformer_rating,
        "limits": {"p_max_kw": model.p_max, "p_min_kw": model.p_min},
        "buses": [{"id": b.id, "households": b.households, "has_load": b.has_load,
                   "has_pv": b.has_pv} for b in model.buses],
        "lines": [{"from": ln.from_bus, "to": ln.to_bus, "r_ohm": ln.resistance,
                   "x_ohm": ln.reactance, "ampacity_a": ln.ampacity} for ln in model.lines],
    }


def load_feeder(path):
    """Read a feeder config file. Errors name the offending line or field."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return feeder_from_dict(data)


def save_feeder(model, path):
    Path(path).write_text(json.dumps(feeder_to_dict(model), indent=2) + "\n")


def default_feeder():
    """The calibrated 20-bus double feeder shipped with the package."""
    text = resources.files("pvdr").joinpath("data/default_feeder.json").read_text()
    return feeder_from_dict(json.loads(text))


# Segment lengths in metres from the busbar outwards, one list per feeder.
FEEDER_A_M = (120, 45, 40, 40, 35, 35, 30, 30, 30, 25)
FEEDER_B_M = (90, 40, 40, 35, 35, 30, 30, 30, 25, 25)
CABLE_R_OHM_KM = 0.206
CABLE_X_OHM_KM = 0.080


def double_feeder_template(households=10, length_scale=1.0):
    """Two radial feeders of ten load buses each, before impedance calibration."""
    buses = [Bus(0, 0, False, False)]
    lines = []
    nxt = 1
    for lengths in (FEEDER_A_M, FEEDER_B_M):
        prev = 0
        for metres in lengths:
            buses.append(Bus(nxt, households, True, True))
            km = metres * length_scale / 1000.0
            lines.append(Line(prev, nxt, CABLE_R_OHM_KM * km, CABLE_X_OHM_KM * km))
            prev = nxt
            nxt += 1
    return FeederModel(tuple(buses), tuple(lines), name="double-feeder-20")


# ------------------------------------------------------------------ solving

@dataclass
class PowerFlowSolution:
    voltages: np.ndarray       # complex p.u., indexed by bus id
    line_p: np.ndarray         # kW at the sending end, indexed like model.lines
    line_q: np.ndarray         # kvar
    losses: float              # kW
    slack_injection: float     # kW drawn from the busbar
    slack_q: float
    iterations: int

    @property
    def vm(self):
        return np.abs(self.voltages)


def _to_internal(model, arr):
    return np.asarray(arr, dtype=float)[..., model._order] / model.base_power


def solve_power_flow(model, p_kw, q_kvar=None, tol=SWEEP_TOL, max_iter=SWEEP_MAX_ITER):
    """Backward/forward sweep for one snapshot of net bus loads (kW, kvar)."""
    p_kw = np.asarray(p_kw, dtype=float)
    if p_kw.shape != (model.n_buses,):
        raise ValueError(f"need one injection per bus ({model.n_buses}), got shape {p_kw.shape}")
    q_kvar = np.zeros_like(p_kw) if q_kvar is None else np.asarray(q_kvar, dtype=float)
    p = _to_internal(model, p_kw)[None, :]
    q = _to_internal(model, q_kvar)[None, :]
    vr, vi, iters, loss = kernels.sweep_batch(model._parent, model._z.real.copy(), model._z.imag.copy(),
                                              p, q, model.busbar_voltage, tol, max_iter)
    if iters[0] > max_iter:
        raise PowerFlowError(f"sweep did not converge in {max_iter} iterations", minute=0)
    v_int = vr[0] + 1j * vi[0]
    # branch currents from the converged voltages
    j = np.conj((p[0] + 1j * q[0]) / v_int)
    for k in range(model.n_buses - 1, 0, -1):
        j[model._parent[k]] += j[k]
    voltages = np.empty(model.n_buses, dtype=complex)
    voltages[model._order] = v_int
    line_s = np.zeros(len(model.lines), dtype=complex)
    for k in range(1, model.n_buses):
        line_s[model._line_of[k]] = v_int[model._parent[k]] * np.conj(j[k]) * model.base_power
    slack = v_int[0] * np.conj(j[0]) * model.base_power
    return PowerFlowSolution(voltages, line_s.real, line_s.imag, float(loss[0] * model.base_power),
                             float(slack.real), float(slack.imag), int(iters[0]))


def max_voltage_rise(solution, model):
    """Largest voltage rise above the busbar setpoint, in percent of nominal."""
    rise = (solution.vm.max() - model.busbar_voltage) * 100.0
    return max(0.0, float(rise))


@dataclass
class MinuteSimulation:
    v_max: np.ndarray           # p.u. per minute
    v_min: np.ndarray
    rise_pct: np.ndarray        # max rise per minute, >= 0
    violations: np.ndarray      # bool per minute
    losses_kw: np.ndarray
    slack_kw: np.ndarray

    @property
    def violation_minutes(self):
        return int(self.violations.sum())

    @property
    def losses_kwh(self):
        return float(self.losses_kw.sum() / 60.0)


def expand_blocks(block_kw, n_minutes):
    """Repeat 10-minute block values to minute resolution."""
    block_kw = np.asarray(block_kw, dtype=float)
    per = n_minutes // block_kw.shape[0]
    if per * block_kw.shape[0] != n_minutes:
        raise ValueError("schedule blocks do not tile the minute series")
    return np.repeat(block_kw, per, axis=0)


def simulate_minutes(model, load_kw, pv_kw, schedule_kw=None, load_kvar=None, pv_kvar=None,
                     rise_limit=RISE_LIMIT_PCT):
    """Solve one power flow per minute and collect the voltage and loss trace.

    ``load_kw`` and ``pv_kw`` are (minutes, buses) arrays of passive load and
    PV output. ``schedule_kw`` is the water-heater power per bus on 10-minute
    blocks (or already per minute); it is added to the bus load while on.
    """
    load_kw = np.asarray(load_kw, dtype=float)
    pv_kw = np.asarray(pv_kw, dtype=float)
    T = load_kw.shape[0]
    p = load_kw - pv_kw
    if schedule_kw is not None:
        sched = np.asarray(schedule_kw, dtype=float)
        p = p + (sched if sched.shape[0] == T else expand_blocks(sched, T))
    q = np.zeros_like(p)
    if load_kvar is not None:
        q += load_kvar
    if pv_kvar is not None:
        q -= pv_kvar
    vr, vi, iters, loss = kernels.sweep_batch(
        model._parent, model._z.real.copy(), model._z.imag.copy(),
        _to_internal(model, p), _to_internal(model, q), model.busbar_voltage,
        SWEEP_TOL, SWEEP_MAX_ITER)
    bad = np.flatnonzero(iters > SWEEP_MAX_ITER)
    if bad.size:
        raise PowerFlowError(f"power flow did not converge at minute {bad[0]}", minute=int(bad[0]))
    vm = np.hypot(vr, vi)
    v_max = vm.max(axis=1)
    rise = np.clip((v_max - model.busbar_voltage) * 100.0, 0.0, None)
    # total consumption at the slack = net load + losses
    slack = p.sum(axis=1) + loss * model.base_power
    return MinuteSimulation(v_max, vm.min(axis=1), rise, rise > rise_limit + 1e-12,
                            loss * model.base_power, slack)


# -------------------------------------------------------------- calibration

def uniform_pv_rise(model, kwp_per_household):
    """Voltage rise (percent) with zero load and every PV plant at peak output."""
    p = np.zeros(model.n_buses)
    for b in model.buses:
        if b.has_pv:
            p[b.id] = -kwp_per_household * b.households
    return max_voltage_rise(solve_power_flow(model, p), model)


def peak_load_min_voltage(model, total_kw=220.0, power_factor=1.0):
    """Lowest bus voltage with ``total_kw`` spread over load buses by household count."""
    hh = model.households
    p = total_kw * hh / hh.sum()
    q = p * np.tan(np.arccos(power_factor))
    return float(solve_power_flow(model, p, q).vm.min())


def calibrate_feeder(template, kwp_per_household=0.865, target_rise=RISE_LIMIT_PCT):
    """Scale line impedances so uniform peak PV at zero load gives exactly ``target_rise``.

    Returns the calibrated model and a small report dict.
    """
    def gap(factor):
        return uniform_pv_rise(template.scaled(factor), kwp_per_household) - target_rise

    hi = 1.0
    while gap(hi) < 0:
        hi *= 2.0
    lo = hi / 2.0
    while gap(lo) > 0:
        lo /= 2.0
    factor = brentq(gap, lo, hi, xtol=1e-14, rtol=1e-14)
    model = template.scaled(factor)
    report = {
        "impedance_scale": factor,
        "kwp_per_household": kwp_per_household,
        "rise_pct": uniform_pv_rise(model, kwp_per_household),
        "peak_min_voltage_pu": peak_load_min_voltage(model, model.p_max),
    }
    return model, report
