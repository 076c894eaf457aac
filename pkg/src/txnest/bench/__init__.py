"""Benchmark harness: microbenchmark, intrusion-detection pipeline, CSV
statistics, and figure rendering."""

from .micro import MICRO_POLICIES, AuditError, MicroConfig, run_micro
from .nids import NIDS_POLICIES, NidsConfig, run_nids
from .stats import CSV_HEADER, RunStats, emit_csv, read_csv

__all__ = [
    "AuditError",
    "CSV_HEADER",
    "MICRO_POLICIES",
    "MicroConfig",
    "NIDS_POLICIES",
    "NidsConfig",
    "RunStats",
    "emit_csv",
    "read_csv",
    "run_micro",
    "run_nids",
]
