"""Trials, random search, model selection and sweeps."""

from .records import read_records, write_records
from .selection import SelectionScheme, aggregate, report_table, select_model, select_per_group, table_csv
from .space import HparamError, HparamSpace, Rule, default_hparams, sample_configs, sample_hparams, space_for
from .sweep import SweepResult, run_jobs, run_search, run_sweep, sweep_csv_rows
from .trial import TrialConfig, TrialError, TrialRecord, replay, run_trial

__all__ = [
    "HparamError", "HparamSpace", "Rule", "SelectionScheme", "SweepResult", "TrialConfig", "TrialError",
    "TrialRecord", "aggregate", "default_hparams", "read_records", "replay", "report_table", "run_jobs",
    "run_search", "run_sweep", "run_trial", "sample_configs", "sample_hparams", "select_model",
    "select_per_group", "space_for", "sweep_csv_rows", "table_csv", "write_records",
]
