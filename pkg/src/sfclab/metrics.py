"""Per-request trace records and the evaluation metrics derived from them."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

TRACE_SCHEMA_VERSION = 1


@dataclass
class MetricsRecord:
    """One processed request.

    ``inference_ns`` is kept in memory for benchmarking but deliberately left
    out of trace files so traces are byte-identical across repeated runs.
    """

    index: int
    t_arr: float
    arrival_rate: float
    verdict: str          # "accepted" | "rejected"
    cause: str            # "" | "cpu" | "bandwidth" | "sla"
    e2e_latency: float | None
    dc_used: list[float]
    dc_total: list[float]
    inference_ns: int = 0

    @property
    def accepted(self) -> bool:
        return self.verdict == "accepted"


def average_acceptance(records: list[MetricsRecord]) -> float:
    if not records:
        raise ValueError("no records")
    return sum(r.accepted for r in records) / len(records)


def acceptance_over_time(records: list[MetricsRecord], window: int = 500) -> np.ndarray:
    """Trailing-window mean of the acceptance indicator, one value per request."""
    if window < 1:
        raise ValueError("window must be >= 1")
    flags = np.array([1.0 if r.accepted else 0.0 for r in records])
    cumsum = np.concatenate([[0.0], np.cumsum(flags)])
    out = np.empty(len(flags))
    for k in range(len(flags)):
        lo = max(0, k - window + 1)
        out[k] = (cumsum[k + 1] - cumsum[lo]) / (k + 1 - lo)
    return out


def violation_breakdown(records: list[MetricsRecord]) -> tuple[float, float]:
    """Fractions of all requests rejected for CPU and for SLA reasons."""
    if not records:
        return 0.0, 0.0
    cpu = sum(r.cause == "cpu" for r in records)
    sla = sum(r.cause == "sla" for r in records)
    return cpu / len(records), sla / len(records)


def peak_mask(records: list[MetricsRecord], fraction: float = 0.8) -> np.ndarray:
    """True where the arrival rate is within ``fraction`` of its maximum."""
    rates = np.array([r.arrival_rate for r in records])
    return rates >= fraction * rates.max()


def avg_utilization(records: list[MetricsRecord], fraction: float = 0.8) -> np.ndarray:
    """Mean used/total across DCs for every peak-hour record."""
    mask = peak_mask(records, fraction)
    out = []
    for r, keep in zip(records, mask):
        if not keep:
            continue
        used = np.array(r.dc_used)
        total = np.array(r.dc_total)
        out.append(float(np.mean(used / total)) if total.size else 0.0)
    return np.array(out)


def load_perplexity(per_dc_used) -> float:
    """exp of the entropy of per-DC usage shares; 1 = concentrated, m = uniform."""
    used = np.asarray(per_dc_used, dtype=np.float64)
    total = used.sum()
    if total <= 0:
        raise ValueError("perplexity undefined for all-zero usage")
    p = used / total
    entropy = -sum(pi * math.log(pi) for pi in p if pi > 0)
    return math.exp(entropy)


def summarize(records: list[MetricsRecord], peak_fraction: float = 0.8) -> dict:
    cpu_frac, sla_frac = violation_breakdown(records)
    util = avg_utilization(records, peak_fraction)
    mask = peak_mask(records, peak_fraction)
    perplexities = [load_perplexity(r.dc_used)
                    for r, keep in zip(records, mask) if keep and sum(r.dc_used) > 0]
    timings = [r.inference_ns for r in records if r.inference_ns > 0]
    return {
        "requests": len(records),
        "avg_acceptance": average_acceptance(records),
        "cpu_violation_fraction": cpu_frac,
        "sla_violation_fraction": sla_frac,
        "avg_utilization_peak": float(np.mean(util)) if util.size else 0.0,
        "load_perplexity_peak": float(np.mean(perplexities)) if perplexities else 0.0,
        "mean_inference_ms": float(np.mean(timings)) / 1e6 if timings else None,
    }


# -- trace files -------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def trace_columns(num_dcs: int) -> list[str]:
    return (["request", "t_arr", "arrival_rate", "verdict", "cause", "e2e_latency"]
            + [f"used_{u}" for u in range(num_dcs)]
            + [f"total_{u}" for u in range(num_dcs)])


def write_trace_csv(path, records: list[MetricsRecord], num_dcs: int) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(trace_columns(num_dcs))
        for r in records:
            writer.writerow([
                r.index, _fmt(r.t_arr), _fmt(r.arrival_rate), r.verdict, r.cause,
                _fmt(r.e2e_latency),
                *[_fmt(u) for u in r.dc_used],
                *[_fmt(t) for t in r.dc_total],
            ])


def read_trace_csv(path) -> list[MetricsRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        used_cols = [c for c in reader.fieldnames if c.startswith("used_")]
        total_cols = [c for c in reader.fieldnames if c.startswith("total_")]
        for row in reader:
            records.append(MetricsRecord(
                index=int(row["request"]),
                t_arr=float(row["t_arr"]),
                arrival_rate=float(row["arrival_rate"]),
                verdict=row["verdict"],
                cause=row["cause"],
                e2e_latency=float(row["e2e_latency"]) if row["e2e_latency"] else None,
                dc_used=[float(row[c]) for c in used_cols],
                dc_total=[float(row[c]) for c in total_cols],
            ))
    return records
