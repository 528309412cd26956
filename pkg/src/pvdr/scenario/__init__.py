"""Scenario data, runs, hosting capacity, sweeps and calibration."""
from .calibrate import build_default_feeder, calibrate_backflow_limit, sunniest_week
from .data import Dataset, synth_dataset
from .fleet import Fleet, initial_soc, make_fleet
from .hosting import METHODS, HostingResult, hosting_capacity
from .ingest import (IngestError, IngestResult, SpotPrices, dataset_from_ingest, ingest_csv,
                     read_spot_csv, write_spot_csv, write_timeseries_csv)
from .runner import (BASES, MODES, CostReport, DayResult, ScenarioConfig, ScenarioResult, plan_day,
                     run_day, run_scenario)
from .sweep import DEFAULT_GRIDS, KINDS, sweep, write_table

__all__ = ["BASES", "DEFAULT_GRIDS", "KINDS", "METHODS", "MODES", "CostReport", "Dataset", "DayResult",
           "Fleet", "HostingResult", "IngestError", "IngestResult", "ScenarioConfig", "ScenarioResult",
           "SpotPrices", "build_default_feeder", "calibrate_backflow_limit", "dataset_from_ingest",
           "hosting_capacity", "ingest_csv", "initial_soc", "make_fleet", "plan_day", "read_spot_csv",
           "run_day", "run_scenario", "sunniest_week", "sweep", "synth_dataset", "write_spot_csv",
           "write_table", "write_timeseries_csv"]
