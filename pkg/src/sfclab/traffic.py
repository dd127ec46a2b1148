"""SFC request workload: time-varying Poisson arrivals, lifetimes, SLAs."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .substrate import quantize_cpu


@dataclass
class Vnf:
    """One virtualized network function; demand is a fraction of one node."""

    cpu_demand: float


@dataclass
class SfcRequest:
    """A linear service chain request.

    ``vlink_bw`` holds one bandwidth demand per virtual link, endpoints
    included: index 0 is src -> first VNF, index k is VNF k -> VNF k+1, and
    the last index is last VNF -> dst.  The src/dst endpoints themselves
    demand no CPU.
    """

    vnfs: list[Vnf]
    vlink_bw: list[float]
    t_arr: float
    t_delta: float
    l_sla: float
    src: int
    dst: int

    @property
    def n(self) -> int:
        return len(self.vnfs)

    @property
    def demands(self) -> np.ndarray:
        return np.array([v.cpu_demand for v in self.vnfs])

    def to_dict(self) -> dict:
        return {
            "vnfs": [v.cpu_demand for v in self.vnfs],
            "vlink_bw": list(self.vlink_bw),
            "t_arr": self.t_arr,
            "t_delta": self.t_delta,
            "l_sla": self.l_sla,
            "src": self.src,
            "dst": self.dst,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SfcRequest":
        return cls(
            vnfs=[Vnf(d) for d in doc["vnfs"]],
            vlink_bw=list(doc["vlink_bw"]),
            t_arr=doc["t_arr"],
            t_delta=doc["t_delta"],
            l_sla=doc["l_sla"],
            src=doc["src"],
            dst=doc["dst"],
        )


def modulated_rate(i: int, n_total: int, base_rate: float) -> float:
    """Sinusoidally modulated arrival rate at step ``i`` of ``n_total``.

    The factor sweeps [0.1, 1.0] with its peak a quarter of the way through,
    so the rate stays within [0.1 * base_rate, base_rate].
    """
    if n_total < 1:
        raise ValueError("n_total must be >= 1")
    if not 0 <= i <= n_total:
        raise ValueError("step index outside [0, n_total]")
    if base_rate <= 0:
        raise ValueError("base_rate must be positive")
    return base_rate * (0.45 * (math.sin(2.0 * math.pi * i / n_total) + 1.0) + 0.1)


def generate_workload(count: int, num_dcs: int, seed,
                      base_rate: float = 0.05,
                      chain_len: tuple[int, int] = (2, 10),
                      demand_range: tuple[float, float] = (0.05, 0.20),
                      lifetime_mean: float = 1000.0,
                      sla_range: tuple[float, float] = (2.0, 4.0),
                      vlink_bw_range: tuple[float, float] = (0.01, 0.05)) -> list[SfcRequest]:
    """Sample ``count`` requests with non-decreasing arrival times.

    Inter-arrival gaps are exponential with the step-dependent modulated
    rate; chain lengths and SLAs are uniform, lifetimes exponential.
    ``seed`` may be an int or a ready ``numpy.random.Generator``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    lo_len, hi_len = chain_len
    requests = []
    t = 0.0
    for i in range(count):
        rate = modulated_rate(i, count, base_rate)
        t += rng.exponential(1.0 / rate)
        length = int(rng.integers(lo_len, hi_len + 1))
        demands = quantize_cpu(rng.uniform(*demand_range, size=length))
        bw = quantize_cpu(rng.uniform(*vlink_bw_range, size=length + 1))
        lifetime = float(rng.exponential(lifetime_mean))
        sla = float(rng.uniform(*sla_range))
        src = int(rng.integers(num_dcs))
        dst = int(rng.integers(num_dcs))
        requests.append(SfcRequest(
            vnfs=[Vnf(float(d)) for d in demands],
            vlink_bw=[float(b) for b in bw],
            t_arr=t,
            t_delta=lifetime,
            l_sla=sla,
            src=src,
            dst=dst,
        ))
    return requests


def save_workload_jsonl(path, workload: list[SfcRequest]) -> None:
    with open(path, "w") as fh:
        for req in workload:
            fh.write(json.dumps(req.to_dict()) + "\n")


def load_workload_jsonl(path) -> list[SfcRequest]:
    workload = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                workload.append(SfcRequest.from_dict(json.loads(line)))
    return workload
