import itertools

import numpy as np
import pytest

from sfclab.substrate import (CPU_QUANTUM, CapacityError, GenerationError, Link,
                              SubstrateNetwork, all_pairs_latency, allocate_sfc,
                              generate_substrate, quantize_cpu, release)

from conftest import make_net


def brute_force_latency(num_nodes, links):
    """Shortest path by exhaustive enumeration of simple paths."""
    weights = {}
    neighbors = {i: set() for i in range(num_nodes)}
    for link in links:
        weights[(link.a, link.b)] = link.latency
        weights[(link.b, link.a)] = link.latency
        neighbors[link.a].add(link.b)
        neighbors[link.b].add(link.a)
    best = np.full((num_nodes, num_nodes), np.inf)
    np.fill_diagonal(best, 0.0)

    def walk(node, target, visited, cost):
        if cost >= best[start, target]:
            return
        if node == target:
            best[start, target] = cost
            return
        for nxt in neighbors[node]:
            if nxt not in visited:
                walk(nxt, target, visited | {nxt}, cost + weights[(node, nxt)])

    for start in range(num_nodes):
        for target in range(num_nodes):
            if start != target:
                walk(start, target, {start}, 0.0)
    return best


def packing_oracle(residuals, demands):
    """Exhaustive assignment of each demand to some node; True if any fits."""
    residuals = list(residuals)
    for combo in itertools.product(range(len(residuals)), repeat=len(demands)):
        loads = [0.0] * len(residuals)
        for node, demand in zip(combo, demands):
            loads[node] += demand
        if all(load <= r for load, r in zip(loads, residuals)):
            return True
    return False


class TestGeneration:
    def test_paper_scenario_dimensions(self):
        net = generate_substrate(5, 0.5, [32, 64, 128, 256], (0.7, 1.0), 1.0, seed=0)
        assert net.num_dcs == 5
        for dc in net.dcs:
            assert dc.num_nodes in (32, 64, 128, 256)
            load = dc.used / dc.capacity
            assert (load >= 0.7 - CPU_QUANTUM).all() and (load <= 1.0).all()
        assert np.isfinite(net.latency_matrix).all()

    def test_single_dc(self):
        net = generate_substrate(1, 0.0, [4], (0.0, 0.5), 1.0, seed=3)
        assert net.latency_matrix.tolist() == [[0.0]]

    def test_complete_graph(self):
        net = generate_substrate(4, 1.0, [4], (0.0, 0.5), 1.0, seed=5)
        assert len(net.links) == 6
        off = net.latency_matrix[~np.eye(4, dtype=bool)]
        assert (off == 1.0).all()

    def test_determinism(self):
        a = generate_substrate(5, 0.5, [32, 64], (0.7, 1.0), 1.0, seed=9)
        b = generate_substrate(5, 0.5, [32, 64], (0.7, 1.0), 1.0, seed=9)
        assert [l.__dict__ for l in a.links] == [l.__dict__ for l in b.links]
        for dca, dcb in zip(a.dcs, b.dcs):
            assert (dca.used == dcb.used).all()
            assert dca.num_nodes == dcb.num_nodes

    def test_impossible_connectivity(self):
        with pytest.raises(GenerationError):
            generate_substrate(3, 0.0, [4], (0.0, 0.5), 1.0, seed=0)

    def test_bad_parameters(self):
        with pytest.raises(ValueError):
            generate_substrate(0, 0.5, [4], (0.0, 0.5), 1.0, seed=0)
        with pytest.raises(ValueError):
            generate_substrate(2, 1.5, [4], (0.0, 0.5), 1.0, seed=0)

    def test_json_roundtrip(self):
        net = generate_substrate(4, 0.6, [8, 16], (0.5, 0.9), 1.0, seed=11)
        clone = SubstrateNetwork.from_json(net.to_json())
        assert np.array_equal(clone.latency_matrix, net.latency_matrix)
        for a, b in zip(net.dcs, clone.dcs):
            assert np.array_equal(a.used, b.used)


class TestLatencyMatrix:
    def test_two_hop_chain(self):
        net = make_net([[1.0]] * 3, links=[Link(0, 1, 1.0), Link(1, 2, 1.0)])
        assert net.latency_matrix[0, 2] == 2.0

    def test_matches_brute_force_enumeration(self, rng):
        # Dyadic latencies keep path sums exactly representable.
        for _ in range(40):
            n = int(rng.integers(2, 7))
            links = [Link(a, b, float(rng.integers(1, 9)) / 4.0)
                     for a in range(n) for b in range(a + 1, n)
                     if rng.random() < 0.6]
            # a ring of heavy links guarantees connectivity
            links = links + [Link(i, (i + 1) % n, 8.0) for i in range(n)]
            net = make_net([[1.0]] * n, links=links)
            expected = brute_force_latency(n, links)
            assert np.array_equal(all_pairs_latency(net), expected)

    def test_triangle_inequality(self, rng):
        net = generate_substrate(6, 0.5, [4], (0.0, 0.5), 1.0, seed=21)
        mat = net.latency_matrix
        for a in range(6):
            for b in range(6):
                for c in range(6):
                    assert mat[a, b] <= mat[a, c] + mat[c, b] + 1e-12


class TestAllocation:
    def test_fragmentation_rejects_despite_aggregate(self):
        net = make_net([[0.15, 0.10]])
        with pytest.raises(CapacityError) as err:
            allocate_sfc(net, {0: [0.20]})
        assert err.value.dc == 0
        assert net.dcs[0].free_cpu() == pytest.approx(0.25, abs=1e-5)

    def test_best_fit_picks_smallest_sufficient(self):
        net = make_net([[0.25, 0.21]])
        receipt = allocate_sfc(net, {0: [0.20]})
        assert receipt.entries == [(0, 1, 0.20)]
        assert net.dcs[0].residuals[1] == pytest.approx(0.01, abs=1e-5)

    def test_transactional_rollback_across_dcs(self):
        # Dyadic demands keep the arithmetic exact, as quantized traffic would.
        net = make_net([[0.5], [0.0625]])
        before = [dc.used.copy() for dc in net.dcs]
        with pytest.raises(CapacityError) as err:
            allocate_sfc(net, {0: [0.25], 1: [0.125]})
        assert err.value.dc == 1
        for dc, used in zip(net.dcs, before):
            assert (dc.used == used).all()

    def test_release_restores_bitwise(self):
        net = make_net([[0.3, 0.2], [0.4]])
        before = [dc.used.copy() for dc in net.dcs]
        receipt = allocate_sfc(net, {0: [0.125, 0.0625], 1: [0.25]})
        release(net, receipt)
        for dc, used in zip(net.dcs, before):
            assert (dc.used == used).all()

    def test_double_release_rejected(self):
        net = make_net([[0.5]])
        receipt = allocate_sfc(net, {0: [0.1]})
        release(net, receipt)
        with pytest.raises(ValueError):
            release(net, receipt)

    def test_unknown_receipt_rejected(self):
        from sfclab.substrate import AllocationReceipt
        net = make_net([[0.5]])
        with pytest.raises(ValueError):
            release(net, AllocationReceipt(999, [(0, 0, 0.1)]))

    def test_demand_validation(self):
        net = make_net([[0.5]])
        with pytest.raises(ValueError):
            allocate_sfc(net, {0: [0.0]})
        with pytest.raises(ValueError):
            allocate_sfc(net, {0: [1.5]})

    def test_feasibility_matches_exhaustive_oracle(self, rng):
        for _ in range(300):
            nodes = int(rng.integers(1, 4))
            residuals = quantize_cpu(rng.uniform(0.0, 0.3, size=nodes))
            k = int(rng.integers(1, 5))
            demands = [float(d) for d in quantize_cpu(rng.uniform(0.05, 0.2, size=k))]
            net = make_net([residuals])
            expected = packing_oracle(residuals, demands)
            try:
                allocate_sfc(net, {0: demands})
                outcome = True
            except CapacityError:
                outcome = False
            assert outcome == expected

    def test_interleaved_replay_restores_initial_state(self, rng):
        net = make_net([rng.uniform(0.1, 0.9, size=6) for _ in range(3)])
        initial = [dc.used.copy() for dc in net.dcs]
        live = []
        for _ in range(100):
            if live and rng.random() < 0.45:
                release(net, live.pop(int(rng.integers(len(live)))))
            else:
                dc = int(rng.integers(3))
                demands = [float(d) for d in
                           quantize_cpu(rng.uniform(0.01, 0.15, size=int(rng.integers(1, 4))))]
                try:
                    live.append(allocate_sfc(net, {dc: demands}))
                except CapacityError:
                    pass
            for dcobj in net.dcs:
                assert (dcobj.used <= dcobj.capacity).all()
                assert (dcobj.used >= 0).all()
        for receipt in live:
            release(net, receipt)
        for dcobj, used in zip(net.dcs, initial):
            assert (dcobj.used == used).all()
