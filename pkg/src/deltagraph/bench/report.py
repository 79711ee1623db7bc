"""Benchmark report schema and rendering."""

from __future__ import annotations

import dataclasses
import json

import numpy as np

# fields that depend on wall-clock timing or the host, not on the workload
TIMING_FIELDS = frozenset(
    {"throughput_txn_per_sec", "wall_time_sec", "analytics_latency_us", "peak_memory_bytes"}
)


@dataclasses.dataclass
class BenchReport:
    workload_id: str = ""
    thread_count: int = 0
    throughput_txn_per_sec: float = 0.0
    analytics_latency_us: dict = dataclasses.field(default_factory=dict)
    abort_count: int = 0
    consolidation_count: int = 0
    peak_memory_bytes: int = 0
    committed_txns: int = 0
    wall_time_sec: float = 0.0
    final_edge_count: int = 0
    vertex_count: int = 0
    vertex_map_digest: str = ""
    verify_failures: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def stable_dict(self) -> dict:
        """The report without timing-dependent fields."""
        return {k: v for k, v in self.to_dict().items() if k not in TIMING_FIELDS}


def latency_summary(samples_us) -> dict:
    if not len(samples_us):
        return {"runs": 0, "mean": 0.0, "p50": 0.0, "p99": 0.0}
    a = np.asarray(samples_us, dtype=np.float64)
    return {
        "runs": int(len(a)),
        "mean": float(a.mean()),
        "p50": float(np.percentile(a, 50)),
        "p99": float(np.percentile(a, 99)),
    }


def emit_report(report: BenchReport, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if fmt != "human":
        raise ValueError("format must be 'json' or 'human'")
    rows = []
    for key, value in report.to_dict().items():
        if key == "analytics_latency_us":
            for kernel, s in value.items():
                rows.append(
                    (f"latency {kernel} (us)", f"mean {s['mean']:.1f}  p50 {s['p50']:.1f}  p99 {s['p99']:.1f}  runs {s['runs']}")
                )
            continue
        if isinstance(value, float):
            value = f"{value:,.2f}"
        elif isinstance(value, int):
            value = f"{value:,}"
        rows.append((key, str(value)))
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)
