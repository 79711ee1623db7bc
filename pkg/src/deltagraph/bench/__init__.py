"""Benchmark harness: log generation, workload drivers and reports."""

from .logio import UpdateLog, generate_log, load_edge_list, order_log, parse_log, write_log
from .report import BenchReport, emit_report
from .runner import apply_record, replay, run_construction, run_mixed

__all__ = [
    "BenchReport",
    "UpdateLog",
    "apply_record",
    "emit_report",
    "generate_log",
    "load_edge_list",
    "order_log",
    "parse_log",
    "replay",
    "run_construction",
    "run_mixed",
    "write_log",
]
