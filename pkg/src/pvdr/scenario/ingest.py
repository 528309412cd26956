"""Reading and writing the measurement CSV formats.

Time series: ``timestamp,bus_id,load_kw,pv_kw[,pv_kvar]``, one row per bus
and minute, UTC timestamps in ISO 8601. Spot prices:
``timestamp,eur_per_mwh``, one row per hour.

Short gaps (fewer than ``MAX_GAP_MINUTES`` consecutive missing minutes) are
filled by linear interpolation. A longer gap removes every day it touches,
for all buses, and is listed in the drop log.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from ..assets import CAPACITY_FACTOR, MINUTES_PER_DAY, TimeSeries
from .data import Dataset, _weighted_normalise_pv

log = logging.getLogger(__name__)

MAX_GAP_MINUTES = 15
TS_COLUMNS = ("timestamp", "bus_id", "load_kw", "pv_kw")
TS_OPTIONAL = ("pv_kvar",)
SPOT_COLUMNS = ("timestamp", "eur_per_mwh")
_MAX_REPORTED = 20


class IngestError(ValueError):
    """Malformed or inconsistent input; ``lines`` holds the offending line numbers."""

    def __init__(self, message, lines=()):
        super().__init__(message)
        self.lines = list(lines)


def parse_timestamp(text):
    """ISO 8601 timestamp as naive UTC; a missing offset means UTC."""
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is not None:
        ts = ts.astimezone(timezone.utc).replace(tzinfo=None)
    return ts


def format_timestamp(ts):
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


def _value(text):
    """Float, or NaN for an empty field; raises ValueError on junk."""
    text = text.strip()
    if text == "" or text.lower() in ("nan", "na", "null"):
        return np.nan
    v = float(text)
    if not np.isfinite(v):
        raise ValueError(f"non-finite value {text!r}")
    return v


def _read_rows(path, required, optional=()):
    """Header and (line number, fields) rows; empty files are an error."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = None
        rows = []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if header is None:
                header = [c.strip().lower() for c in row]
                if tuple(header[:len(required)]) != required or \
                        any(c not in optional for c in header[len(required):]):
                    raise IngestError(f"{path}: header must be {','.join(required)}"
                                      f"{''.join('[,' + c + ']' for c in optional)}, got {','.join(header)}",
                                      [reader.line_num])
                continue
            rows.append((reader.line_num, row))
    if header is None or not rows:
        raise IngestError(f"{path}: no data rows")
    return header, rows


def _raise_collected(path, errors):
    if errors:
        shown = "; ".join(f"line {n}: {msg}" for n, msg in errors[:_MAX_REPORTED])
        more = f" (+{len(errors) - _MAX_REPORTED} more)" if len(errors) > _MAX_REPORTED else ""
        raise IngestError(f"{path}: {len(errors)} malformed rows: {shown}{more}",
                          [n for n, _ in errors])


def missing_runs(mask):
    """(start, length) of every run of True in a boolean vector."""
    m = np.concatenate([[False], np.asarray(mask, dtype=bool), [False]])
    d = np.diff(m.astype(np.int8))
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1)
    return list(zip(starts.tolist(), (ends - starts).tolist()))


def fill_gaps(values, max_gap=MAX_GAP_MINUTES):
    """Linear interpolation across NaN runs shorter than ``max_gap``.

    Runs at the ends of the vector take the nearest valid value. Returns the
    filled copy and the (start, length) runs that were too long (left NaN).
    """
    x = np.array(values, dtype=float)
    bad = np.isnan(x)
    long_runs = [(s, n) for s, n in missing_runs(bad) if n >= max_gap]
    if not bad.any() or bad.all():
        return x, long_runs
    keep_nan = np.zeros_like(bad)
    for s, n in long_runs:
        keep_nan[s:s + n] = True
    idx = np.arange(x.size)
    good = ~bad
    fill = bad & ~keep_nan
    x[fill] = np.interp(idx[fill], idx[good], x[good])
    return x, long_runs


@dataclass
class IngestResult:
    """Cleaned minute data of whole days.

    ``values`` is (days, buses, 1440, columns) with columns as in
    ``columns`` (after ``timestamp`` and ``bus_id``).
    """
    days: list                       # datetime.date
    bus_ids: np.ndarray
    columns: tuple
    values: np.ndarray
    dropped: list = field(default_factory=list)    # dicts: date, bus_id, start, minutes
    interpolated_minutes: int = 0

    def column(self, name):
        return self.values[..., self.columns.index(name)]

    @property
    def load(self):
        return self.column("load_kw")

    @property
    def pv(self):
        return self.column("pv_kw")

    def drop_log(self):
        return [dict(d, date=str(d["date"])) for d in self.dropped]

    def series(self):
        """Per bus, one TimeSeries per run of consecutive kept days."""
        out = {}
        runs, cur = [], []
        for j, d in enumerate(self.days):
            if cur and d != self.days[cur[-1]] + timedelta(days=1):
                runs.append(cur)
                cur = []
            cur.append(j)
        if cur:
            runs.append(cur)
        for b, bus in enumerate(self.bus_ids):
            out[int(bus)] = [
                TimeSeries(datetime.combine(self.days[r[0]], datetime.min.time()), 1,
                           self.values[r, b].reshape(-1, len(self.columns)))
                for r in runs]
        return out


def ingest_csv(path, max_gap=MAX_GAP_MINUTES):
    """Read a minute time-series CSV into whole, gap-free days.

    Raises
    ------
    IngestError
        Empty file, bad header, malformed rows (all listed with line
        numbers), timestamps off the minute grid, or timestamps that do not
        increase strictly per bus.
    """
    header, rows = _read_rows(path, TS_COLUMNS, TS_OPTIONAL)
    ncol = len(header) - 2
    errors = []
    parsed = {}
    last = {}
    for line, row in rows:
        if len(row) != len(header):
            errors.append((line, f"expected {len(header)} fields, got {len(row)}"))
            continue
        try:
            ts = parse_timestamp(row[0])
            bus = int(row[1].strip())
            vals = [_value(c) for c in row[2:]]
        except ValueError as exc:
            errors.append((line, str(exc)))
            continue
        if ts.second or ts.microsecond:
            errors.append((line, f"timestamp {row[0].strip()} not on a whole minute"))
            continue
        prev = last.get(bus)
        if prev is not None and ts <= prev[0]:
            raise IngestError(f"{path}: line {line}: timestamp {row[0].strip()} for bus {bus} "
                              f"does not increase (previous on line {prev[1]})", [line])
        last[bus] = (ts, line)
        parsed.setdefault(bus, []).append((ts, vals))
    _raise_collected(path, errors)

    first = min(v[0][0] for v in parsed.values()).date()
    end = max(v[-1][0] for v in parsed.values()).date()
    n_days = (end - first).days + 1
    origin = datetime.combine(first, datetime.min.time())
    bus_ids = np.array(sorted(parsed))
    grid = np.full((len(bus_ids), n_days * MINUTES_PER_DAY, ncol), np.nan)
    for b, bus in enumerate(bus_ids):
        ts = np.array([(t - origin) // timedelta(minutes=1) for t, _ in parsed[bus]])
        grid[b, ts] = np.array([v for _, v in parsed[bus]])

    drop_days = set()
    dropped = []
    filled = 0
    for b, bus in enumerate(bus_ids):
        missing = np.isnan(grid[b]).any(axis=1)
        for s, n in missing_runs(missing):
            if n >= max_gap:
                touched = range(s // MINUTES_PER_DAY, (s + n - 1) // MINUTES_PER_DAY + 1)
                for d in touched:
                    drop_days.add(d)
                    dropped.append({"date": first + timedelta(days=d), "bus_id": int(bus),
                                    "start": format_timestamp(origin + timedelta(minutes=s)),
                                    "minutes": int(n)})
            else:
                filled += n
        for c in range(ncol):
            grid[b, :, c], _ = fill_gaps(grid[b, :, c], max_gap)
    for entry in dropped:
        log.info("dropped %s: bus %d missing %d minutes from %s", entry["date"],
                 entry["bus_id"], entry["minutes"], entry["start"])

    keep = [d for d in range(n_days) if d not in drop_days]
    values = grid.reshape(len(bus_ids), n_days, MINUTES_PER_DAY, ncol).transpose(1, 0, 2, 3)[keep]
    if np.isnan(values).any():      # a column missing on its own for a long stretch
        raise IngestError(f"{path}: unfilled gaps remain")
    return IngestResult([first + timedelta(days=d) for d in keep], bus_ids, tuple(header[2:]),
                        np.ascontiguousarray(values), dropped, int(filled))


@dataclass
class SpotPrices:
    days: list                       # datetime.date
    eur_per_mwh: np.ndarray          # (days, 24)
    dropped: list = field(default_factory=list)

    def for_day(self, day):
        return self.eur_per_mwh[self.days.index(day)]


def read_spot_csv(path):
    """Hourly spot prices; days without all 24 hours are dropped and logged."""
    _, rows = _read_rows(path, SPOT_COLUMNS)
    errors = []
    hours = {}
    prev = None
    for line, row in rows:
        if len(row) != 2:
            errors.append((line, f"expected 2 fields, got {len(row)}"))
            continue
        try:
            ts = parse_timestamp(row[0])
            price = _value(row[1])
        except ValueError as exc:
            errors.append((line, str(exc)))
            continue
        if ts.minute or ts.second or ts.microsecond:
            errors.append((line, f"timestamp {row[0].strip()} not on a whole hour"))
            continue
        if prev is not None and ts <= prev[0]:
            raise IngestError(f"{path}: line {line}: timestamp {row[0].strip()} does not increase "
                              f"(previous on line {prev[1]})", [line])
        prev = (ts, line)
        if not np.isnan(price):
            hours.setdefault(ts.date(), {})[ts.hour] = price
    _raise_collected(path, errors)
    days, vals, dropped = [], [], []
    for d in sorted(hours):
        if len(hours[d]) == 24:
            days.append(d)
            vals.append([hours[d][h] for h in range(24)])
        else:
            dropped.append({"date": str(d), "hours": len(hours[d])})
            log.info("dropped spot prices of %s: %d of 24 hours", d, len(hours[d]))
    return SpotPrices(days, np.array(vals).reshape(-1, 24), dropped)


def dataset_from_ingest(result, spot=None, households=10, kwp_total=None,
                        capacity_factor=CAPACITY_FACTOR, spot_seed=0):
    """Dataset from cleaned measurements.

    The PV shape is the summed PV over ``kwp_total``; without it the shape
    is scaled to ``capacity_factor``. Days lacking spot prices are dropped
    when ``spot`` is given, otherwise synthetic prices by day of year are
    used. Each day stands for ``365 / days`` days of the year.
    """
    from ..assets import synth_spot_prices

    days = list(result.days)
    index = list(range(len(days)))
    if spot is not None:
        index = [j for j, d in enumerate(days) if d in spot.days]
        if not index:
            raise IngestError("no day has both measurements and spot prices")
        prices = np.array([spot.for_day(days[j]) for j in index])
    else:
        year = synth_spot_prices(366, seed=spot_seed)
        prices = np.array([year[days[j].timetuple().tm_yday - 1] for j in index])
    load = result.load[index]
    pv_total = result.pv[index].sum(axis=1)
    weights = np.full(len(index), 365.0 / len(index))
    if kwp_total is None:
        pv_pu = _weighted_normalise_pv(pv_total, weights, capacity_factor)
    else:
        if not kwp_total > 0:
            raise ValueError("installed PV must be positive")
        pv_pu = pv_total / kwp_total
    hh = np.broadcast_to(np.asarray(households), (len(result.bus_ids),)).astype(int)
    return Dataset([days[j] for j in index], weights, load, pv_pu, prices, hh.copy(),
                   result.bus_ids.copy())


def write_timeseries_csv(dataset, path, kwp_total):
    """Write a dataset in the time-series format, PV split by household count."""
    hh = np.asarray(dataset.households, dtype=float)
    kwp = kwp_total * hh / hh.sum()
    with open(path, "w", newline="") as fh:
        fh.write(",".join(TS_COLUMNS) + "\n")
        for j, day in enumerate(dataset.days):
            origin = datetime.combine(day, datetime.min.time())
            stamps = [format_timestamp(origin + timedelta(minutes=t)) for t in range(MINUTES_PER_DAY)]
            pv = kwp[:, None] * dataset.pv_pu[j][None, :]
            for t, stamp in enumerate(stamps):
                fh.writelines(f"{stamp},{int(bus)},{dataset.load[j, b, t]:.6f},{pv[b, t]:.6f}\n"
                              for b, bus in enumerate(dataset.bus_ids))


def write_spot_csv(dataset, path):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(SPOT_COLUMNS) + "\n")
        for j, day in enumerate(dataset.days):
            origin = datetime.combine(day, datetime.min.time())
            fh.writelines(f"{format_timestamp(origin + timedelta(hours=h))},{dataset.spot[j, h]:.4f}\n"
                          for h in range(24))


__all__ = ["IngestError", "IngestResult", "SpotPrices", "ingest_csv", "read_spot_csv",
           "dataset_from_ingest", "write_timeseries_csv", "write_spot_csv", "fill_gaps",
           "missing_runs", "MAX_GAP_MINUTES", "parse_timestamp"]
