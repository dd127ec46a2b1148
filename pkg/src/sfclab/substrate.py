"""Substrate network: data centers with discrete compute nodes and inter-DC links.

CPU quantities are quantized to integer multiples of ``CPU_QUANTUM`` at
sampling time, so allocation arithmetic is exact in binary floating point and
releasing a receipt restores node state bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import shortest_path

# 2^-20 of one node; fine enough that quantization is invisible in statistics.
CPU_QUANTUM = 2.0**-20

# Safety valve for the exhaustive packing fallback; unreachable at chain
# lengths <= 10, but keeps adversarial inputs from hanging the simulator.
_PACKING_NODE_BUDGET = 100_000


class GenerationError(RuntimeError):
    """No valid substrate can be generated for the given parameters."""


class CapacityError(RuntimeError):
    """A data center cannot host the requested demands on its nodes."""

    def __init__(self, dc: int):
        super().__init__(f"insufficient node capacity in DC {dc}")
        self.dc = dc


def quantize_cpu(values):
    """Snap CPU amounts onto the exact-arithmetic grid."""
    return np.round(np.asarray(values, dtype=np.float64) / CPU_QUANTUM) * CPU_QUANTUM


@dataclass
class Link:
    """Undirected inter-DC link. ``bandwidth=None`` means unlimited."""

    a: int
    b: int
    latency: float = 1.0
    bandwidth: float | None = None


class DataCenter:
    """One data center: parallel arrays of per-node capacity and usage."""

    def __init__(self, dc_id: int, capacity: np.ndarray, used: np.ndarray):
        capacity = np.asarray(capacity, dtype=np.float64)
        used = np.asarray(used, dtype=np.float64)
        if capacity.shape != used.shape:
            raise ValueError("capacity/used shape mismatch")
        if (used < 0).any() or (used > capacity).any():
            raise ValueError("node usage outside [0, capacity]")
        self.id = dc_id
        self.capacity = capacity
        self.used = used

    @property
    def num_nodes(self) -> int:
        return self.capacity.size

    @property
    def residuals(self) -> np.ndarray:
        return self.capacity - self.used

    def total_cpu(self) -> float:
        return float(self.capacity.sum())

    def free_cpu(self) -> float:
        return float((self.capacity - self.used).sum())


@dataclass
class AllocationReceipt:
    """Record of node-level placements; the inverse of one allocate_sfc call."""

    receipt_id: int
    # (dc index, node index within DC, amount), one entry per demand in
    # request order.
    entries: list[tuple[int, int, float]] = field(default_factory=list)


class SubstrateNetwork:
    """Data centers plus inter-DC links and the all-pairs latency matrix."""

    def __init__(self, dcs: list[DataCenter], links: list[Link],
                 seed: int | None = None, params: dict | None = None):
        self.dcs = dcs
        self.links = links
        self.seed = seed
        self.params = dict(params) if params else {}
        self.latency_matrix = all_pairs_latency(self)
        if not np.isfinite(self.latency_matrix).all():
            raise GenerationError("substrate graph is not connected")
        self._initial_used = [dc.used.copy() for dc in dcs]
        self._live_receipts: dict[int, AllocationReceipt] = {}
        self._next_receipt_id = 0
        self._predecessors: np.ndarray | None = None

    @property
    def num_dcs(self) -> int:
        return len(self.dcs)

    def total_cpu(self) -> np.ndarray:
        return np.array([dc.total_cpu() for dc in self.dcs])

    def used_cpu(self) -> np.ndarray:
        return np.array([float(dc.used.sum()) for dc in self.dcs])

    def free_cpu(self) -> np.ndarray:
        return np.array([dc.free_cpu() for dc in self.dcs])

    @property
    def has_finite_bandwidth(self) -> bool:
        return any(link.bandwidth is not None for link in self.links)

    def reset_loads(self) -> None:
        """Restore every node to its generation-time load; void all receipts."""
        for dc, used in zip(self.dcs, self._initial_used):
            dc.used[:] = used
        self._live_receipts.clear()

    def shortest_path_predecessors(self) -> np.ndarray:
        """Predecessor matrix for reconstructing minimum-latency routes."""
        if self._predecessors is None:
            dense = _adjacency(self)
            _, pred = shortest_path(dense, method="D", directed=False,
                                    return_predecessors=True)
            self._predecessors = pred
        return self._predecessors

    def route_links(self, a: int, b: int) -> list[tuple[int, int]]:
        """Links (as sorted DC pairs) on the shortest-latency path a -> b."""
        if a == b:
            return []
        pred = self.shortest_path_predecessors()
        hops = []
        node = b
        while node != a:
            prev = int(pred[a, node])
            hops.append((min(prev, node), max(prev, node)))
            node = prev
        hops.reverse()
        return hops

    # -- serialization ----------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "version": 1,
            "seed": self.seed,
            "params": self.params,
            "dcs": [
                {"id": dc.id, "capacity": dc.capacity.tolist(),
                 "used": dc.used.tolist()}
                for dc in self.dcs
            ],
            "links": [
                {"a": l.a, "b": l.b, "latency": l.latency,
                 "bandwidth": l.bandwidth}
                for l in self.links
            ],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SubstrateNetwork":
        doc = json.loads(text)
        if doc.get("version") != 1:
            raise ValueError(f"unsupported topology document version: {doc.get('version')}")
        dcs = [
            DataCenter(d["id"], np.array(d["capacity"]), np.array(d["used"]))
            for d in doc["dcs"]
        ]
        links = [Link(l["a"], l["b"], l["latency"], l["bandwidth"])
                 for l in doc["links"]]
        return cls(dcs, links, seed=doc.get("seed"), params=doc.get("params"))


def _adjacency(net: SubstrateNetwork) -> np.ndarray:
    m = net.num_dcs
    dense = np.zeros((m, m))
    for link in net.links:
        dense[link.a, link.b] = link.latency
        dense[link.b, link.a] = link.latency
    return dense


def all_pairs_latency(net: SubstrateNetwork) -> np.ndarray:
    """Shortest-path latency between every DC pair (Dijkstra on links)."""
    if net.num_dcs == 1:
        return np.zeros((1, 1))
    return shortest_path(_adjacency(net), method="D", directed=False)


def generate_substrate(num_dcs: int, edge_prob: float, node_choices,
                       load_range, link_latency: float, seed: int,
                       max_attempts: int = 1000) -> SubstrateNetwork:
    """Sample a connected random substrate.

    Edges are drawn independently with probability ``edge_prob``; disconnected
    samples are discarded and regenerated from a derived sub-seed.  Each DC
    gets a node count drawn uniformly from ``node_choices`` and per-node
    initial loads drawn uniformly from ``load_range``.
    """
    if num_dcs < 1:
        raise ValueError("num_dcs must be >= 1")
    if not 0.0 <= edge_prob <= 1.0:
        raise ValueError("edge_prob must lie in [0, 1]")
    lo, hi = load_range
    if not (0.0 <= lo <= hi <= 1.0):
        raise ValueError("load_range must lie within [0, 1]")
    if num_dcs > 1 and edge_prob == 0.0:
        raise GenerationError("edge_prob=0 can never connect more than one DC")

    params = {
        "num_dcs": num_dcs,
        "edge_prob": edge_prob,
        "node_choices": list(node_choices),
        "load_range": [lo, hi],
        "link_latency": link_latency,
    }
    for attempt in range(max_attempts):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(attempt,)))
        links = [
            Link(i, j, latency=link_latency)
            for i in range(num_dcs)
            for j in range(i + 1, num_dcs)
            if rng.random() < edge_prob
        ]
        if not _connected(num_dcs, links):
            continue
        dcs = []
        for dc_id in range(num_dcs):
            n = int(rng.choice(np.asarray(node_choices)))
            used = quantize_cpu(rng.uniform(lo, hi, size=n))
            dcs.append(DataCenter(dc_id, np.ones(n), used))
        return SubstrateNetwork(dcs, links, seed=seed, params=params)
    raise GenerationError(
        f"no connected sample within {max_attempts} attempts "
        f"(num_dcs={num_dcs}, edge_prob={edge_prob})")


def _connected(num_dcs: int, links: list[Link]) -> bool:
    if num_dcs == 1:
        return True
    neighbors: dict[int, list[int]] = {i: [] for i in range(num_dcs)}
    for link in links:
        neighbors[link.a].append(link.b)
        neighbors[link.b].append(link.a)
    seen = {0}
    stack = [0]
    while stack:
        for nxt in neighbors[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return len(seen) == num_dcs


# -- allocation ------------------------------------------------------------


def allocate_sfc(net: SubstrateNetwork, demands_by_dc: dict[int, list[float]]) -> AllocationReceipt:
    """Place per-DC demand lists onto nodes; transactional.

    Within each DC the demands are placed one by one in request order using
    best fit (the node with the smallest sufficient residual).  If best fit
    gets stuck but some arrangement of the demands onto nodes exists, that
    arrangement is used instead, so success is equivalent to packing
    feasibility.  On failure everything is rolled back and the first failing
    DC is reported via :class:`CapacityError`.
    """
    for demands in demands_by_dc.values():
        for amount in demands:
            if not 0.0 < amount <= 1.0:
                raise ValueError(f"demand {amount} outside (0, 1]")
    entries: list[tuple[int, int, float]] = []
    try:
        for dc_idx in sorted(demands_by_dc):
            demands = demands_by_dc[dc_idx]
            if not demands:
                continue
            dc = net.dcs[dc_idx]
            placement = _best_fit(dc, demands)
            if placement is None:
                placement = _search_packing(dc.residuals, demands)
            if placement is None:
                raise CapacityError(dc_idx)
            for node, amount in zip(placement, demands):
                dc.used[node] += amount
                entries.append((dc_idx, node, amount))
    except CapacityError:
        _rollback(net, entries)
        raise
    receipt = AllocationReceipt(net._next_receipt_id, entries)
    net._next_receipt_id += 1
    net._live_receipts[receipt.receipt_id] = receipt
    return receipt


def release(net: SubstrateNetwork, receipt: AllocationReceipt) -> None:
    """Return a receipt's CPU to its nodes. Double release is rejected."""
    live = net._live_receipts.pop(receipt.receipt_id, None)
    if live is not receipt:
        raise ValueError(f"receipt {receipt.receipt_id} is unknown or already released")
    _rollback(net, receipt.entries)


def _rollback(net: SubstrateNetwork, entries: list[tuple[int, int, float]]) -> None:
    for dc_idx, node, amount in reversed(entries):
        net.dcs[dc_idx].used[node] -= amount


def _best_fit(dc: DataCenter, demands: list[float]) -> list[int] | None:
    """Greedy placement; returns node index per demand, or None when stuck."""
    residuals = dc.residuals
    placement = []
    for amount in demands:
        ok = residuals >= amount
        if not ok.any():
            return None
        candidates = np.flatnonzero(ok)
        node = int(candidates[np.argmin(residuals[candidates])])
        residuals[node] -= amount
        placement.append(node)
    return placement


def _search_packing(residuals: np.ndarray, demands: list[float]) -> list[int] | None:
    """Exhaustive packing of demands onto nodes, tightest-fit-first order.

    Demands are searched in descending size; duplicate residual values are
    tried only once per depth.  Complete up to ``_PACKING_NODE_BUDGET``
    expansions.
    """
    if sum(demands) > residuals.sum():
        return None
    order = sorted(range(len(demands)), key=lambda i: demands[i], reverse=True)
    work = residuals.copy()
    placement = [-1] * len(demands)
    budget = [_PACKING_NODE_BUDGET]

    def place(k: int) -> bool:
        if k == len(order):
            return True
        if budget[0] <= 0:
            return False
        amount = demands[order[k]]
        tried = set()
        for node in np.argsort(work, kind="stable"):
            r = work[node]
            if r < amount or r in tried:
                continue
            tried.add(r)
            budget[0] -= 1
            work[node] = r - amount
            placement[order[k]] = int(node)
            if place(k + 1):
                work[node] = r
                return True
            work[node] = r
        return False

    return placement if place(0) else None
