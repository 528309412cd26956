"""Command-line entry point.

Subcommands: ``run-det``, ``run-mpc``, ``hosting``, ``sweep``, ``calibrate``
and ``gen-data``. Results go to ``--out`` as CSV/JSON tables; a one-object
JSON summary is printed on stdout. Failures print an error object on
stderr and exit with 2 (configuration), 3 (input/output and data), 4
(solver or power flow) or 1 (anything else).

The data directory (``--data``, default ``$PVDR_DATA_DIR``) may hold
``timeseries.csv``, ``spot.csv``, ``meta.json`` and ``feeder.json`` as
written by ``gen-data``; without it the seeded synthetic data is used.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .dispatch import SOLVERS, InfeasibleError, SolverLimitError
from .forecast import ForecastConfig
from .grid import ConfigError, PowerFlowError, default_feeder, load_feeder, save_feeder

DATA_DIR_ENV = "PVDR_DATA_DIR"
DEFAULT_OUT = "pvdr-out"
COMMANDS = ("run-det", "run-mpc", "hosting", "sweep", "calibrate", "gen-data")

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_IO, EXIT_SOLVER = 0, 1, 2, 3, 4

_SCENARIO_FILE_KEYS = ("seed", "days")


class CliConfigError(ConfigError):
    pass


# ----------------------------------------------------------------- config

@dataclass
class RunConfig:
    """Validated settings of one invocation."""
    command: str
    out: Path
    seed: int = 0
    feeder: Path | None = None
    data_dir: Path | None = None
    days: object = "sample"          # "sample", "year" or a list of day-of-year indices
    scenario: dict = field(default_factory=dict)   # ScenarioConfig fields
    options: dict = field(default_factory=dict)    # subcommand options

    def scenario_config(self, **changes):
        from .scenario import ScenarioConfig

        return ScenarioConfig(**{**self.scenario, **changes})


def _scenario_keys():
    from .scenario import ScenarioConfig

    return tuple(f.name for f in fields(ScenarioConfig))


def read_scenario_file(path):
    """Scenario JSON: ScenarioConfig fields plus ``seed`` and ``days``; nothing else."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CliConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise CliConfigError(f"{path}: expected a JSON object")
    allowed = set(_scenario_keys()) | set(_SCENARIO_FILE_KEYS)
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise CliConfigError(f"{path}: unknown keys {unknown}")
    fc = data.get("forecast")
    if fc is not None:
        if not isinstance(fc, dict):
            raise CliConfigError(f"{path}: forecast must be an object")
        bad = sorted(set(fc) - {f.name for f in fields(ForecastConfig)})
        if bad:
            raise CliConfigError(f"{path}: unknown forecast keys {bad}")
    return data


def _parse_days(value):
    if value is None or value in ("sample", "year"):
        return value or "sample"
    if isinstance(value, str):
        try:
            value = [int(v) for v in value.split(",") if v.strip()]
        except ValueError:
            raise CliConfigError(f"days: expected 'sample', 'year' or day indices, got {value!r}") from None
    days = [int(v) for v in value]
    if not days or any(not 0 <= d < 365 for d in days):
        raise CliConfigError("days: indices must lie in 0..364")
    return days


def build_config(args):
    """RunConfig from parsed arguments; flags override the scenario file."""
    scenario, seed, days = {}, 0, "sample"
    if args.scenario:
        data = read_scenario_file(args.scenario)
        seed = data.pop("seed", seed)
        days = data.pop("days", days)
        scenario.update(data)
    if args.seed is not None:
        seed = args.seed
    if getattr(args, "days", None) is not None:
        days = args.days
    for key in ("solver", "gap", "time_limit", "penetration"):
        val = getattr(args, key, None)
        if val is not None:
            scenario[key] = val
    if args.command == "run-mpc":
        scenario["mode"] = "mpc" if args.mode == "hourly" else "day-ahead"
        if args.forecast_seed is not None:
            scenario["forecast_seed"] = args.forecast_seed
    if args.command == "run-det":
        scenario["mode"] = "perfect"
    data_dir = args.data or os.environ.get(DATA_DIR_ENV) or None
    rc = RunConfig(args.command, Path(args.out), int(seed),
                   Path(args.feeder) if args.feeder else None,
                   Path(data_dir) if data_dir else None, _parse_days(days), scenario,
                   {k: v for k, v in vars(args).items()
                    if k in ("day", "method", "kind", "grid", "tol", "workers")})
    validate(rc)
    return rc


def validate(rc):
    """Checks done before any computation."""
    try:
        rc.scenario_config()
    except (TypeError, ValueError) as exc:
        raise CliConfigError(f"scenario: {exc}") from None
    solver = rc.scenario.get("solver", "heuristic")
    if solver not in SOLVERS:
        raise CliConfigError(f"solver must be one of {SOLVERS}")
    gap = rc.scenario.get("gap", 1e-4)
    if not (isinstance(gap, (int, float)) and 0 <= gap < 1):
        raise CliConfigError("gap must lie in [0, 1)")
    tl = rc.scenario.get("time_limit")
    if tl is not None and not tl > 0:
        raise CliConfigError("time limit must be positive")
    if rc.feeder is not None and not rc.feeder.is_file():
        raise FileNotFoundError(f"feeder file {rc.feeder} not found")
    if rc.data_dir is not None and not rc.data_dir.is_dir():
        raise FileNotFoundError(f"data directory {rc.data_dir} not found")
    if rc.options.get("tol") is not None and not rc.options["tol"] > 0:
        raise CliConfigError("tol must be positive")
    if rc.options.get("workers") is not None and rc.options["workers"] < 1:
        raise CliConfigError("workers must be at least 1")


# ------------------------------------------------------------------ inputs

def resolve_feeder(rc):
    if rc.feeder is not None:
        return load_feeder(rc.feeder)
    if rc.data_dir is not None and (rc.data_dir / "feeder.json").is_file():
        return load_feeder(rc.data_dir / "feeder.json")
    return default_feeder()


def resolve_dataset(rc):
    """Measured data from the data directory if present, else synthetic data."""
    from .scenario import dataset_from_ingest, ingest_csv, read_spot_csv, synth_dataset

    if rc.data_dir is not None and (rc.data_dir / "timeseries.csv").is_file():
        meta = {}
        if (rc.data_dir / "meta.json").is_file():
            meta = json.loads((rc.data_dir / "meta.json").read_text())
        ing = ingest_csv(rc.data_dir / "timeseries.csv")
        spot = read_spot_csv(rc.data_dir / "spot.csv") if (rc.data_dir / "spot.csv").is_file() else None
        ds = dataset_from_ingest(ing, spot, meta.get("households", 10), meta.get("kwp_total"))
        return ds, ing.drop_log()
    if rc.days == "year":
        return synth_dataset(rc.seed, days=range(365)), []
    if rc.days == "sample":
        return synth_dataset(rc.seed), []
    return synth_dataset(rc.seed, days=rc.days), []


# ----------------------------------------------------------------- outputs

def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, Path):
        return str(v)
    if v is None or isinstance(v, (bool, int, str)):
        return v
    return str(v)


def write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path, rows):
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _jsonable(r.get(k, "")) for k in keys})


def day_rows(result):
    return [{"date": str(d.day), "weight": float(w), **d.report.to_dict()}
            for d, w in zip(result.days, result.weights)]


def dispatch_rows(result):
    rows = []
    for d in result.days:
        for g in range(d.B.shape[0]):
            rows.append({"date": str(d.day), "group": g,
                         "on": "".join(str(int(b)) for b in d.B[g])})
    return rows


# ---------------------------------------------------------------- commands

def cmd_run_det(rc):
    from .scenario import run_scenario

    model = resolve_feeder(rc)
    ds, drops = resolve_dataset(rc)
    cfg = rc.scenario_config()
    res = run_scenario(model, ds, cfg)
    write_csv(rc.out / "days.csv", day_rows(res))
    write_csv(rc.out / "dispatch.csv", dispatch_rows(res))
    summary = {"command": rc.command, "seed": rc.seed, "days": len(res.days),
               "config": asdict(cfg), **res.summary()}
    if drops:
        summary["dropped_days"] = drops
    write_json(rc.out / "summary.json", summary)
    return summary


def _mpc_dataset(rc):
    """Dataset of the requested day (or all configured days) and the installed kWp.

    A single synthetic day is cut from the full year, so its installed PV
    follows from yearly totals.
    """
    from datetime import date

    from .scenario import synth_dataset

    day = rc.options.get("day")
    if day is None:
        return (*resolve_dataset(rc), None)
    try:
        when = date.fromisoformat(day)
    except ValueError:
        raise CliConfigError(f"--day: expected YYYY-MM-DD, got {day!r}") from None
    if rc.data_dir is not None and (rc.data_dir / "timeseries.csv").is_file():
        ds, drops = resolve_dataset(rc)
        if when not in ds.days:
            raise CliConfigError(f"--day {day} is not in the data (or was dropped)")
        return ds.subset([ds.days.index(when)]), drops, ds.kwp_for_penetration(
            rc.scenario_config().penetration)
    year = synth_dataset(rc.seed, days=range(365))
    doy = when.timetuple().tm_yday - 1
    if doy >= 365:
        raise CliConfigError("--day: 31 December of a leap year is not in the synthetic year")
    sub = year.subset([doy])
    sub.weights = np.ones(1)
    return sub, [], year.kwp_for_penetration(rc.scenario_config().penetration)


def cmd_run_mpc(rc):
    from .forecast import dump_csv, hourly_traces, make_forecast
    from .scenario import run_scenario
    from .scenario.runner import day_context, day_traces
    from .scenario.fleet import make_fleet

    model = resolve_feeder(rc)
    ds, drops, kwp = _mpc_dataset(rc)
    cfg = rc.scenario_config()
    res = run_scenario(model, ds, cfg, kwp_total=kwp)
    write_csv(rc.out / "days.csv", day_rows(res))
    write_csv(rc.out / "dispatch.csv", dispatch_rows(res))
    log = []
    for d in res.days:
        mpc = d.info.get("mpc")
        entries = mpc.log if mpc is not None else [{"hour": 0, "status": d.info.get("status"),
                                                    "fallback": d.info.get("fallback")}]
        for e in entries:
            log.append({"date": str(d.day), **{k: e[k] for k in ("hour", "status", "fallback") if k in e},
                        **({"soc_start_kwh": e["soc_start"]} if "soc_start" in e else {})})
    write_json(rc.out / "mpc_log.json", log)
    if len(res.days) == 1:
        fleet = make_fleet(model, ds, res.kwp_total)
        ctx = day_context(model, ds, fleet, 0, cfg.soc_seed)
        fc, pu = day_traces(ctx, cfg)
        traces = hourly_traces(pu, fc) if cfg.mode == "mpc" else [make_forecast(pu, 0, fc)]
        dump_csv(traces, rc.out / "forecasts.csv")
    summary = {"command": rc.command, "seed": rc.seed, "days": [str(d.day) for d in res.days],
               "config": asdict(cfg),
               "fallback_hours": sum(len(d.info.get("fallback_hours", [])) for d in res.days),
               **res.summary()}
    if drops:
        summary["dropped_days"] = drops
    write_json(rc.out / "summary.json", summary)
    return summary


def cmd_hosting(rc):
    from .scenario import METHODS, hosting_capacity

    model = resolve_feeder(rc)
    ds, drops = resolve_dataset(rc)
    method = rc.options["method"]
    methods = METHODS if method == "all" else (method,)
    cfg = rc.scenario_config()
    out = {}
    for m in methods:
        r = hosting_capacity(model, ds, m, tol=rc.options.get("tol") or 1e-3, cfg=cfg)
        out[m] = r.to_dict()
    write_json(rc.out / "hosting.json", out)
    summary = {"command": rc.command, "seed": rc.seed,
               "hosting": {m: {k: out[m][k] for k in ("penetration_pct", "kwp_per_household", "capped")}
                           for m in methods}}
    if drops:
        summary["dropped_days"] = drops
    return summary


def _grid_values(kind, text):
    if text is None:
        return None
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if kind == "forecast":
        return parts
    try:
        if kind.startswith("grouping"):
            return [int(p) for p in parts]
        return [float(p) for p in parts]
    except ValueError:
        raise CliConfigError(f"--grid: bad value list {text!r} for {kind}") from None


def cmd_sweep(rc):
    from .scenario import sweep, write_table

    model = resolve_feeder(rc)
    ds, drops = resolve_dataset(rc)
    kind = rc.options["kind"]
    cfg = rc.scenario_config()
    rows, _ = sweep(model, ds, kind, grid=_grid_values(kind, rc.options.get("grid")), cfg=cfg,
                    workers=rc.options.get("workers") or 1)
    write_table(rows, rc.out / f"sweep_{kind}.csv")
    write_table(rows, rc.out / f"sweep_{kind}.json")
    failed = [r["value"] for r in rows if r.get("error")]
    return {"command": rc.command, "kind": kind, "points": len(rows), "failed": failed,
            "table": str(rc.out / f"sweep_{kind}.csv")}


def cmd_calibrate(rc):
    from .scenario import build_default_feeder
    from .scenario.calibrate import CALIBRATION_PENETRATION

    pen = rc.scenario.get("penetration", CALIBRATION_PENETRATION)
    model, report = build_default_feeder(seed=rc.seed, penetration=pen)
    save_feeder(model, rc.out / "feeder.json")
    write_json(rc.out / "calibration.json", report)
    return {"command": rc.command, "seed": rc.seed, "p_min_kw": model.p_min,
            "impedance_scale": report["impedance"]["impedance_scale"],
            "feeder": str(rc.out / "feeder.json")}


def cmd_gen_data(rc):
    from .scenario import synth_dataset, write_spot_csv, write_timeseries_csv

    if rc.days == "year":
        ds = synth_dataset(rc.seed, days=range(365))
    elif rc.days == "sample":
        ds = synth_dataset(rc.seed)
    else:
        ds = synth_dataset(rc.seed, days=rc.days)
    pen = rc.scenario.get("penetration", 0.70)
    kwp = ds.kwp_for_penetration(pen)
    write_timeseries_csv(ds, rc.out / "timeseries.csv", kwp)
    write_spot_csv(ds, rc.out / "spot.csv")
    meta = {"seed": rc.seed, "days": [str(d) for d in ds.days], "penetration": pen,
            "kwp_total": kwp, "households": [int(h) for h in ds.households],
            "bus_ids": [int(b) for b in ds.bus_ids]}
    write_json(rc.out / "meta.json", meta)
    return {"command": rc.command, "seed": rc.seed, "days": ds.n_days, "kwp_total": kwp,
            "files": [str(rc.out / n) for n in ("timeseries.csv", "spot.csv", "meta.json")]}


_HANDLERS = {"run-det": cmd_run_det, "run-mpc": cmd_run_mpc, "hosting": cmd_hosting,
             "sweep": cmd_sweep, "calibrate": cmd_calibrate, "gen-data": cmd_gen_data}


# ------------------------------------------------------------------ parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliConfigError(f"{self.prog}: {message}")


def build_parser():
    from .scenario import KINDS, METHODS

    common = _Parser(add_help=False)
    common.add_argument("--feeder", help="feeder config JSON (default: shipped calibrated feeder)")
    common.add_argument("--scenario", help="scenario JSON with ScenarioConfig fields, seed, days")
    common.add_argument("--seed", type=int, help="synthetic data seed (default 0)")
    common.add_argument("--solver", choices=SOLVERS)
    common.add_argument("--gap", type=float, help="relative MILP gap tolerance")
    common.add_argument("--time-limit", type=float, help="seconds per dispatch solve")
    common.add_argument("--out", default=DEFAULT_OUT, help="output directory")
    common.add_argument("--data", help=f"data directory (default ${DATA_DIR_ENV})")
    common.add_argument("--days", help="'sample' (14 days), 'year' or day indices a,b,c")

    p = _Parser(prog="pvdr", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = sub.add_parser("run-det", parents=[common], help="perfect-information dispatch")
    s.add_argument("--penetration", type=float)
    s = sub.add_parser("run-mpc", parents=[common], help="dispatch on PV forecasts")
    s.add_argument("--day", help="single day YYYY-MM-DD (default: all configured days)")
    s.add_argument("--forecast-seed", type=int)
    s.add_argument("--mode", choices=("hourly", "day-ahead"), default="hourly")
    s.add_argument("--penetration", type=float)
    s = sub.add_parser("hosting", parents=[common], help="PV hosting capacity")
    s.add_argument("--method", choices=(*METHODS, "all"), required=True)
    s.add_argument("--tol", type=float, help="bisection tolerance on penetration (0.001)")
    s = sub.add_parser("sweep", parents=[common], help="parameter sweep table")
    s.add_argument("--kind", choices=KINDS, required=True)
    s.add_argument("--grid", help="comma-separated grid values")
    s.add_argument("--penetration", type=float)
    s.add_argument("--workers", type=int, help="parallel processes for grid points")
    s = sub.add_parser("calibrate", parents=[common], help="calibrate the default feeder")
    s.add_argument("--penetration", type=float)
    s = sub.add_parser("gen-data", parents=[common], help="write synthetic CSV inputs")
    s.add_argument("--penetration", type=float)
    return p


def _classify(exc):
    from .scenario import IngestError

    if isinstance(exc, IngestError):
        return "io", EXIT_IO
    if isinstance(exc, (ConfigError, CliConfigError)):
        return "config", EXIT_CONFIG
    if isinstance(exc, (InfeasibleError, SolverLimitError, PowerFlowError)):
        return "solver", EXIT_SOLVER
    if isinstance(exc, (OSError, json.JSONDecodeError)):
        return "io", EXIT_IO
    if isinstance(exc, ValueError):
        return "config", EXIT_CONFIG
    return "internal", EXIT_INTERNAL


def error_payload(exc):
    kind, code = _classify(exc)
    err = {"kind": kind, "type": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("lines", "constraint", "unit", "minute"):
        val = getattr(exc, attr, None)
        if val is not None and val != []:
            err[attr] = val
    return {"error": _jsonable(err)}, code


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        rc = build_config(args)
        rc.out.mkdir(parents=True, exist_ok=True)
        summary = _HANDLERS[rc.command](rc)
    except SystemExit:      # --help
        raise
    except Exception as exc:  # every failure becomes an error object and exit code
        payload, code = error_payload(exc)
        print(json.dumps(payload), file=sys.stderr)
        return code
    print(json.dumps(_jsonable(summary), sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
