import logging
from datetime import date, datetime, timedelta

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pvdr.scenario.data import synth_dataset
from pvdr.scenario.ingest import (IngestError, dataset_from_ingest, fill_gaps, ingest_csv,
                                  missing_runs, parse_timestamp, read_spot_csv,
                                  write_spot_csv, write_timeseries_csv)

DAY0 = datetime(2013, 6, 1)


def minute_rows(days=2, buses=(1, 2), skip=(), extra=None):
    """CSV text with load = bus + minute/1000 and pv = 2 * load, minus the ``skip`` minutes."""
    lines = ["timestamp,bus_id,load_kw,pv_kw"]
    for t in range(days * 1440):
        stamp = (DAY0 + timedelta(minutes=t)).strftime("%Y-%m-%dT%H:%M:%SZ")
        for b in buses:
            if (b, t) in skip:
                continue
            v = b + t / 1000
            lines.append(f"{stamp},{b},{v:.6f},{2 * v:.6f}")
    if extra:
        lines += extra
    return "\n".join(lines) + "\n"


def write(tmp_path, text, name="ts.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_clean_file_reads_back(tmp_path):
    res = ingest_csv(write(tmp_path, minute_rows()))
    assert res.days == [date(2013, 6, 1), date(2013, 6, 2)]
    assert list(res.bus_ids) == [1, 2]
    assert res.values.shape == (2, 2, 1440, 2)
    assert res.load[1, 0, 5] == pytest.approx(1 + 1445 / 1000)
    np.testing.assert_allclose(res.pv, 2 * res.load)
    assert res.dropped == [] and res.interpolated_minutes == 0


def test_ten_minute_gap_is_interpolated(tmp_path):
    skip = {(2, t) for t in range(600, 610)}
    res = ingest_csv(write(tmp_path, minute_rows(skip=skip)))
    assert len(res.days) == 2 and res.interpolated_minutes == 10
    # the series is linear in time, so interpolation restores it
    np.testing.assert_allclose(res.load[0, 1, 600:610], 2 + np.arange(600, 610) / 1000, atol=1e-9)


def test_twenty_minute_gap_drops_the_day(tmp_path, caplog):
    skip = {(1, t) for t in range(1440 + 100, 1440 + 120)}
    with caplog.at_level(logging.INFO, logger="pvdr.scenario.ingest"):
        res = ingest_csv(write(tmp_path, minute_rows(skip=skip)))
    assert res.days == [date(2013, 6, 1)]
    assert res.dropped == [{"date": date(2013, 6, 2), "bus_id": 1,
                            "start": "2013-06-02T01:40:00Z", "minutes": 20}]
    assert "2013-06-02" in caplog.text
    assert res.drop_log()[0]["date"] == "2013-06-02"


def test_gap_length_threshold(tmp_path):
    short = ingest_csv(write(tmp_path, minute_rows(skip={(1, t) for t in range(50, 64)})))
    assert len(short.days) == 2                    # 14 minutes are filled
    full = ingest_csv(write(tmp_path, minute_rows(skip={(1, t) for t in range(50, 65)})))
    assert len(full.days) == 1                     # 15 minutes are not


def test_gap_across_midnight_drops_both_days(tmp_path):
    skip = {(2, t) for t in range(1430, 1450)}
    res = ingest_csv(write(tmp_path, minute_rows(days=3, skip=skip)))
    assert res.days == [date(2013, 6, 3)]
    assert {d["date"] for d in res.dropped} == {date(2013, 6, 1), date(2013, 6, 2)}


def test_empty_and_header_only_files(tmp_path):
    with pytest.raises(IngestError, match="no data rows"):
        ingest_csv(write(tmp_path, ""))
    with pytest.raises(IngestError, match="no data rows"):
        ingest_csv(write(tmp_path, "timestamp,bus_id,load_kw,pv_kw\n"))
    with pytest.raises(IngestError, match="header"):
        ingest_csv(write(tmp_path, "time,bus,load,pv\n2013-06-01T00:00:00Z,1,1,1\n"))


def test_malformed_rows_are_listed_with_line_numbers(tmp_path):
    text = minute_rows(days=1, buses=(1,))
    lines = text.splitlines()
    lines[3] = lines[3].replace(",1,", ",one,")
    lines[10] = lines[10] + ",7"
    lines[20] = "2013-06-01T00:19:30Z,1,1.0,2.0"
    with pytest.raises(IngestError) as err:
        ingest_csv(write(tmp_path, "\n".join(lines) + "\n"))
    assert err.value.lines == [4, 11, 21]
    assert "line 4" in str(err.value) and "line 21" in str(err.value)


def test_non_increasing_timestamp_is_fatal(tmp_path):
    extra = ["2013-06-01T05:00:00Z,1,1.0,2.0"]
    with pytest.raises(IngestError, match="does not increase") as err:
        ingest_csv(write(tmp_path, minute_rows(days=1, buses=(1,), extra=extra)))
    assert err.value.lines == [1442]


def test_timestamps_with_offsets_are_utc():
    assert parse_timestamp("2013-06-01T02:00:00+02:00") == datetime(2013, 6, 1)
    assert parse_timestamp("2013-06-01T00:00:00Z") == datetime(2013, 6, 1)
    assert parse_timestamp(" 2013-06-01T00:00:00 ") == datetime(2013, 6, 1)
    with pytest.raises(ValueError):
        parse_timestamp("yesterday")


def test_optional_reactive_column(tmp_path):
    text = minute_rows(days=1, buses=(3,)).splitlines()
    text = [text[0] + ",pv_kvar"] + [r + ",0.5" for r in text[1:]]
    res = ingest_csv(write(tmp_path, "\n".join(text) + "\n"))
    assert res.columns == ("load_kw", "pv_kw", "pv_kvar")
    np.testing.assert_array_equal(res.column("pv_kvar"), 0.5)


def test_series_split_at_dropped_days(tmp_path):
    skip = {(1, t) for t in range(1440 + 10, 1440 + 40)}
    res = ingest_csv(write(tmp_path, minute_rows(days=3, skip=skip)))
    series = res.series()
    assert [len(s) for s in series[1]] == [1440, 1440]
    assert series[2][1].start == datetime(2013, 6, 3)


# ------------------------------------------------------------------ helpers

def test_fill_gaps_examples():
    x = np.array([np.nan, 1.0, np.nan, np.nan, 4.0, np.nan])
    filled, long_runs = fill_gaps(x, max_gap=15)
    np.testing.assert_allclose(filled, [1.0, 1.0, 2.0, 3.0, 4.0, 4.0])
    assert long_runs == []
    y, runs = fill_gaps(np.r_[1.0, np.full(3, np.nan), 5.0], max_gap=3)
    assert runs == [(1, 3)] and np.isnan(y[1:4]).all()


@given(st.lists(st.booleans(), max_size=60))
def test_missing_runs_cover_mask(mask):
    out = np.zeros(len(mask), dtype=bool)
    for s, n in missing_runs(mask):
        assert n > 0 and not out[s:s + n].any()
        out[s:s + n] = True
    np.testing.assert_array_equal(out, np.asarray(mask, dtype=bool))


# --------------------------------------------------------------- spot & rt

def test_spot_csv_drops_incomplete_days(tmp_path):
    lines = ["timestamp,eur_per_mwh"]
    for h in range(24 + 20):
        lines.append(f"{(DAY0 + timedelta(hours=h)).strftime('%Y-%m-%dT%H:%M:%SZ')},{30 + h}")
    spot = read_spot_csv(write(tmp_path, "\n".join(lines) + "\n", "spot.csv"))
    assert spot.days == [date(2013, 6, 1)]
    assert spot.for_day(date(2013, 6, 1))[23] == 53.0
    assert spot.dropped == [{"date": "2013-06-02", "hours": 20}]
    lines.insert(3, "2013-06-01T01:30:00Z,1")
    with pytest.raises(IngestError, match="whole hour"):
        read_spot_csv(write(tmp_path, "\n".join(lines) + "\n", "spot.csv"))


def test_round_trip_through_csv(tmp_path):
    ds = synth_dataset(3, days=[150, 151])
    kwp = 120.0
    write_timeseries_csv(ds, tmp_path / "ts.csv", kwp)
    write_spot_csv(ds, tmp_path / "spot.csv")
    res = ingest_csv(tmp_path / "ts.csv")
    back = dataset_from_ingest(res, read_spot_csv(tmp_path / "spot.csv"),
                               households=ds.households, kwp_total=kwp)
    assert back.days == ds.days
    np.testing.assert_allclose(back.load, ds.load, atol=1e-6)
    np.testing.assert_allclose(back.pv_pu, ds.pv_pu, atol=1e-6)
    np.testing.assert_allclose(back.spot, ds.spot, atol=1e-4)
    np.testing.assert_array_equal(back.bus_ids, ds.bus_ids)


def test_dataset_without_spot_or_kwp(tmp_path):
    res = ingest_csv(write(tmp_path, minute_rows()))
    ds = dataset_from_ingest(res)
    assert ds.spot.shape == (2, 24) and ds.weights.sum() == pytest.approx(365.0)
    assert ds.yearly_pv_kwh_per_kwp() == pytest.approx(8760 * 0.0983, rel=0.01)
    with pytest.raises(ValueError):
        dataset_from_ingest(res, kwp_total=0.0)
