"""Admission environment: expiry handling, CPU/bandwidth/SLA checks, state encoding."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .substrate import AllocationReceipt, CapacityError, SubstrateNetwork, allocate_sfc, release
from .traffic import SfcRequest
from .validation import as_assignment

# Cap used to map service lifetimes into the [0, 1] feature range.
LIFETIME_FEATURE_CAP = 5000.0


class Verdict(str, Enum):
    ACCEPTED = "accepted"
    REJECTED_CPU = "rejected_cpu"
    REJECTED_BANDWIDTH = "rejected_bandwidth"
    REJECTED_SLA = "rejected_sla"


@dataclass
class AdmissionOutcome:
    verdict: Verdict
    # Present unless the request died at the CPU check.
    e2e_latency: float | None = None
    # First DC whose nodes could not host its share (CPU rejections only).
    failing_dc: int | None = None

    @property
    def accepted(self) -> bool:
        return self.verdict is Verdict.ACCEPTED


@dataclass
class ActiveService:
    receipt: AllocationReceipt
    expiry: float
    # (link key, amount) bandwidth claims; empty under unlimited bandwidth.
    bw_claims: list[tuple[tuple[int, int], float]]


@dataclass
class Observation:
    """Everything a policy may look at when deciding one request."""

    state: np.ndarray
    request: SfcRequest
    net: SubstrateNetwork


def state_dim(num_dcs: int) -> int:
    return 5 + 4 * num_dcs


def encode_state(request: SfcRequest, net: SubstrateNetwork, horizon: float) -> np.ndarray:
    """Per-VNF token features, one row per VNF, shape (n, 5 + 4m).

    Row layout: [cpu demand, outgoing vlink bandwidth demand, arrival/horizon,
    capped lifetime, scaled SLA, src one-hot (m), dst one-hot (m),
    free CPU fraction per DC (m), free bandwidth fraction per DC (m)].
    All entries lie in [0, 1]; the substrate block repeats across rows.
    """
    m = net.num_dcs
    n = request.n
    row_static = np.zeros(5 + 4 * m, dtype=np.float32)
    row_static[2] = min(request.t_arr / horizon, 1.0) if horizon > 0 else 0.0
    row_static[3] = min(request.t_delta / LIFETIME_FEATURE_CAP, 1.0)
    row_static[4] = np.clip((request.l_sla - 2.0) / 2.0, 0.0, 1.0)
    row_static[5 + request.src] = 1.0
    row_static[5 + m + request.dst] = 1.0
    total = net.total_cpu()
    row_static[5 + 2 * m:5 + 3 * m] = net.free_cpu() / total
    row_static[5 + 3 * m:5 + 4 * m] = _free_bandwidth_fraction(net)
    state = np.tile(row_static, (n, 1))
    state[:, 0] = request.demands
    state[:, 1] = request.vlink_bw[1:]
    return state


def _free_bandwidth_fraction(net: SubstrateNetwork) -> np.ndarray:
    if not net.has_finite_bandwidth:
        return np.ones(net.num_dcs, dtype=np.float32)
    free = np.zeros(net.num_dcs)
    total = np.zeros(net.num_dcs)
    for link in net.links:
        if link.bandwidth is None:
            continue
        remaining = getattr(link, "_remaining", link.bandwidth)
        for end in (link.a, link.b):
            free[end] += remaining
            total[end] += link.bandwidth
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(total > 0, free / np.maximum(total, 1e-12), 1.0)
    return frac.astype(np.float32)


def e2e_latency(targets: np.ndarray, request: SfcRequest, latency_matrix: np.ndarray) -> float:
    """Sum of shortest-path latencies along src -> VNFs -> dst."""
    total = latency_matrix[request.src, targets[0]]
    for a, b in zip(targets[:-1], targets[1:]):
        total += latency_matrix[a, b]
    total += latency_matrix[targets[-1], request.dst]
    return float(total)


class SfcEnv:
    """Request-by-request admission MDP over one substrate and one workload.

    ``reset`` restores the substrate to its generation-time node loads, so
    repeated episodes on the same topology share initial conditions.  Rewards
    are the raw acceptance indicator; return scaling is an agent concern.
    """

    def __init__(self, net: SubstrateNetwork, workload: list[SfcRequest] | None = None):
        self.net = net
        self.workload: list[SfcRequest] = workload or []
        self._services: list[tuple[float, int, ActiveService]] = []
        self._service_counter = 0
        self._cursor = 0
        self._done = True
        self.accepted_count = 0
        self.last_outcome: AdmissionOutcome | None = None
        self.horizon = self._workload_horizon()

    def _workload_horizon(self) -> float:
        return self.workload[-1].t_arr if self.workload else 1.0

    def set_workload(self, workload: list[SfcRequest]) -> None:
        self.workload = workload
        self.horizon = self._workload_horizon()
        self._done = True

    def reset(self) -> np.ndarray:
        if not self.workload:
            raise RuntimeError("no workload loaded")
        self.net.reset_loads()
        for link in self.net.links:
            if link.bandwidth is not None:
                link._remaining = link.bandwidth
        self._services.clear()
        self._service_counter = 0
        self._cursor = 0
        self._done = False
        self.accepted_count = 0
        self.last_outcome = None
        return encode_state(self.workload[0], self.net, self.horizon)

    @property
    def current_request(self) -> SfcRequest:
        if self._done:
            raise RuntimeError("episode is finished; call reset()")
        return self.workload[self._cursor]

    def observe(self) -> Observation:
        req = self.current_request
        return Observation(encode_state(req, self.net, self.horizon), req, self.net)

    def step(self, action) -> tuple[int, np.ndarray | None, bool]:
        """Admit the current request under ``action``; advance the cursor.

        ``action`` is either an int assignment vector or a relaxed (n, m)
        matrix decoded by per-row argmax (lowest index wins ties).
        """
        req = self.current_request
        targets = as_assignment(action, req.n, self.net.num_dcs)
        outcome = self.admit(req, targets, now=req.t_arr)
        self.last_outcome = outcome
        reward = 1 if outcome.accepted else 0
        self.accepted_count += reward
        self._cursor += 1
        done = self._cursor >= len(self.workload)
        self._done = done
        next_state = None if done else encode_state(
            self.workload[self._cursor], self.net, self.horizon)
        return reward, next_state, done

    def admit(self, request: SfcRequest, targets: np.ndarray, now: float) -> AdmissionOutcome:
        """Run the admission pipeline: expiry, CPU, bandwidth, SLA.

        CPU rejection short-circuits the remaining checks; any rejection
        leaves the substrate exactly as it was.
        """
        self._release_expired(now)
        demands_by_dc: dict[int, list[float]] = {}
        for target, vnf in zip(targets, request.vnfs):
            demands_by_dc.setdefault(int(target), []).append(vnf.cpu_demand)
        try:
            receipt = allocate_sfc(self.net, demands_by_dc)
        except CapacityError as err:
            return AdmissionOutcome(Verdict.REJECTED_CPU, failing_dc=err.dc)

        bw_claims: list[tuple[tuple[int, int], float]] = []
        if self.net.has_finite_bandwidth:
            bw_claims = self._claim_bandwidth(request, targets)
            if bw_claims is None:
                release(self.net, receipt)
                latency = e2e_latency(targets, request, self.net.latency_matrix)
                return AdmissionOutcome(Verdict.REJECTED_BANDWIDTH, e2e_latency=latency)

        latency = e2e_latency(targets, request, self.net.latency_matrix)
        if latency > request.l_sla:
            self._release_bandwidth(bw_claims)
            release(self.net, receipt)
            return AdmissionOutcome(Verdict.REJECTED_SLA, e2e_latency=latency)

        service = ActiveService(receipt, expiry=now + request.t_delta, bw_claims=bw_claims)
        self._service_counter += 1
        heapq.heappush(self._services, (service.expiry, self._service_counter, service))
        return AdmissionOutcome(Verdict.ACCEPTED, e2e_latency=latency)

    def _release_expired(self, now: float) -> None:
        while self._services and self._services[0][0] <= now:
            _, _, service = heapq.heappop(self._services)
            release(self.net, service.receipt)
            self._release_bandwidth(service.bw_claims)

    def _link_by_key(self, key: tuple[int, int]):
        for link in self.net.links:
            if (min(link.a, link.b), max(link.a, link.b)) == key:
                return link
        raise KeyError(key)

    def _claim_bandwidth(self, request: SfcRequest, targets: np.ndarray):
        """Reserve bandwidth for every inter-DC hop; None on violation."""
        path = [request.src, *[int(t) for t in targets], request.dst]
        wanted: dict[tuple[int, int], float] = {}
        for demand, (a, b) in zip(request.vlink_bw, zip(path[:-1], path[1:])):
            for key in self.net.route_links(a, b):
                wanted[key] = wanted.get(key, 0.0) + demand
        claims = []
        for key, amount in wanted.items():
            link = self._link_by_key(key)
            if link.bandwidth is None:
                continue
            remaining = getattr(link, "_remaining", link.bandwidth)
            if amount > remaining:
                self._release_bandwidth(claims)
                return None
            link._remaining = remaining - amount
            claims.append((key, amount))
        return claims

    def _release_bandwidth(self, claims) -> None:
        for key, amount in claims or []:
            link = self._link_by_key(key)
            link._remaining = getattr(link, "_remaining", link.bandwidth) + amount

    def utilization(self) -> tuple[np.ndarray, np.ndarray]:
        """(used, total) CPU per DC at this instant."""
        return self.net.used_cpu(), self.net.total_cpu()
