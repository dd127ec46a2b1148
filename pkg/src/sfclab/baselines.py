"""Search and heuristic baselines: greedy placement, iterated local search,
and its risk-aware variant with per-DC online admission models."""

from __future__ import annotations

from collections import deque

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from sklearn.exceptions import NotFittedError

from .agents.base import BasePolicy
from .env import Verdict, e2e_latency
from .nn.layers import init_parameters
from .nn.ops import gelu
from .nn.optim import AdamW
from .nn.checkpoint import load_checkpoint, load_module_arrays, module_arrays, save_checkpoint
from .traffic import SfcRequest


def gp_assign(request: SfcRequest, net) -> np.ndarray:
    """The whole chain goes to the DC with the most free CPU (no split)."""
    target = int(np.argmax(net.free_cpu()))
    return np.full(request.n, target, dtype=np.int64)


def aggregate_feasible(targets: np.ndarray, demands: np.ndarray,
                       free_cpu: np.ndarray) -> bool:
    """Per-DC sum of co-assigned demands within the aggregate free CPU."""
    loads = np.bincount(targets, weights=demands, minlength=free_cpu.shape[0])
    return bool((loads <= free_cpu).all())


def ils_solve(request: SfcRequest, net, rng: np.random.Generator,
              max_iter: int | None = None, perturb_prob: float = 0.2,
              feasible_fn=None) -> np.ndarray:
    """Iterated local search for a minimum-latency feasible assignment.

    Each iteration perturbs the incumbent, re-optimizes one random VNF over
    all DCs (keeping only moves whose candidate assignment passes the
    feasibility test), and accepts strictly lower end-to-end latency.  Stops
    early once the incumbent is feasible and meets the SLA; the incumbent is
    returned either way and the environment has the final word.
    """
    m = net.num_dcs
    n = request.n
    lat = net.latency_matrix
    demands = request.demands
    if max_iter is None:
        max_iter = 10 * n * m
    if feasible_fn is None:
        free = net.free_cpu()
        feasible_fn = lambda targets: aggregate_feasible(targets, demands, free)

    def latency_of(targets):
        return e2e_latency(targets, request, lat)

    best = rng.integers(0, m, size=n)
    best_lat = latency_of(best)
    if best_lat <= request.l_sla and feasible_fn(best):
        return best
    for _ in range(max_iter):
        cand = best.copy()
        shake = rng.random(n) < perturb_prob
        if shake.any():
            cand[shake] = rng.integers(0, m, size=int(shake.sum()))
        vnf = int(rng.integers(n))
        original = cand[vnf]
        chosen, chosen_lat = None, np.inf
        for dc in range(m):
            cand[vnf] = dc
            if not feasible_fn(cand):
                continue
            trial_lat = latency_of(cand)
            if trial_lat < chosen_lat:
                chosen, chosen_lat = dc, trial_lat
        cand[vnf] = original if chosen is None else chosen
        cand_lat = latency_of(cand)
        if cand_lat < best_lat:
            best, best_lat = cand, cand_lat
        if best_lat <= request.l_sla and feasible_fn(best):
            break
    return best


class RiskModel(nn.Module):
    """Tiny per-DC admission model over (free CPU, total demand, VNF count)."""

    def __init__(self, width: int = 32):
        super().__init__()
        self.in_proj = nn.Linear(3, width)
        self.norm = nn.LayerNorm(width, eps=1e-5)
        self.fc1 = nn.Linear(width, width)
        self.fc2 = nn.Linear(width, width)
        self.head = nn.Linear(width, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = gelu(self.in_proj(x))
        h = h + self.fc2(gelu(self.fc1(self.norm(h))))
        return torch.sigmoid(self.head(h)).squeeze(-1)


def risk_features(free_cpu: float, total_demand: float, n_vnfs: int,
                  total_capacity: float) -> np.ndarray:
    """Scale raw quantities into the model's bounded input ranges."""
    return np.array([free_cpu / total_capacity,
                     total_demand / total_capacity,
                     n_vnfs / 10.0], dtype=np.float32)


def risk_predict(model: RiskModel, free_frac: float, demand_frac: float,
                 n_vnfs: int) -> float:
    """Acceptance probability for placing a VNF group on one DC."""
    x = torch.tensor([[free_frac, demand_frac, n_vnfs / 10.0]], dtype=torch.float32)
    with torch.no_grad():
        return float(model(x).item())


def risk_update(model: RiskModel, memory, optimizer: AdamW) -> float | None:
    """One full-batch cross-entropy pass over the memory; None when empty."""
    if not memory:
        return None
    feats = torch.as_tensor(np.stack([f for f, _ in memory]), dtype=torch.float32)
    labels = torch.as_tensor([y for _, y in memory], dtype=torch.float32)
    probs = model(feats).clamp(1e-7, 1.0 - 1e-7)
    loss = F.binary_cross_entropy(probs, labels)
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return float(loss.item())


class GreedyPolicy(BasePolicy):
    algo = "gp"

    def predict(self, obs) -> np.ndarray:
        return gp_assign(obs.request, obs.net)


class IlsPolicy(BasePolicy):
    algo = "ils"

    def __init__(self, perturb_prob=0.2, max_iter_factor=10, seed=0):
        self.perturb_prob = perturb_prob
        self.max_iter_factor = max_iter_factor
        self.seed = seed

    def fit(self, env, workload_fn=None, eval_workload=None):
        return self

    def predict(self, obs) -> np.ndarray:
        if not hasattr(self, "rng_"):
            self.rng_ = np.random.default_rng(self.seed)
        max_iter = self.max_iter_factor * obs.request.n * obs.net.num_dcs
        return ils_solve(obs.request, obs.net, self.rng_, max_iter=max_iter,
                         perturb_prob=self.perturb_prob)


class RailsPolicy(BasePolicy):
    """ILS with per-DC risk models in place of the aggregate CPU check.

    Feedback: an accepted request labels every hosting DC 1 with the features
    seen at decision time; a CPU rejection labels only the failing DC 0.
    SLA rejections carry no per-DC resource information and produce no labels.
    Models refresh every ``update_every`` processed requests.
    """

    algo = "rails"

    def __init__(self, rho_risk=0.5, perturb_prob=0.2, max_iter_factor=10,
                 memory_size=1000, update_every=100, lr=0.01,
                 weight_decay=0.01, seed=0):
        self.rho_risk = rho_risk
        self.perturb_prob = perturb_prob
        self.max_iter_factor = max_iter_factor
        self.memory_size = memory_size
        self.update_every = update_every
        self.lr = lr
        self.weight_decay = weight_decay
        self.seed = seed

    def build(self, num_dcs: int, rng: np.random.Generator | None = None) -> "RailsPolicy":
        rng = rng or np.random.default_rng(self.seed)
        self.rng_ = np.random.default_rng(rng.integers(2**63))
        self.models_ = []
        self.optimizers_ = []
        for _ in range(num_dcs):
            model = RiskModel()
            init_parameters(model, rng)
            self.models_.append(model)
            self.optimizers_.append(AdamW(model, lr=self.lr, weight_decay=self.weight_decay))
        self.memories_ = [deque(maxlen=self.memory_size) for _ in range(num_dcs)]
        self.request_count_ = 0
        return self

    def fit(self, env, workload_fn=None, eval_workload=None):
        self.build(env.net.num_dcs)
        return self

    def _ensure_built(self, num_dcs: int):
        if not hasattr(self, "models_"):
            self.build(num_dcs)

    def _risk_feasible(self, targets, demands, free, total) -> bool:
        for dc in np.unique(targets):
            on_dc = targets == dc
            feats = risk_features(free[dc], float(demands[on_dc].sum()),
                                  int(on_dc.sum()), total[dc])
            x = torch.as_tensor(feats[None, :])
            with torch.no_grad():
                prob = float(self.models_[dc](x).item())
            if prob < self.rho_risk:
                return False
        return True

    def predict(self, obs) -> np.ndarray:
        self._ensure_built(obs.net.num_dcs)
        request = obs.request
        demands = request.demands
        free = obs.net.free_cpu()
        total = obs.net.total_cpu()
        feasible = lambda targets: self._risk_feasible(targets, demands, free, total)
        max_iter = self.max_iter_factor * request.n * obs.net.num_dcs
        targets = ils_solve(request, obs.net, self.rng_, max_iter=max_iter,
                            perturb_prob=self.perturb_prob, feasible_fn=feasible)
        # Decision-time features per involved DC, kept for feedback labeling.
        self._pending_ = {}
        for dc in np.unique(targets):
            on_dc = targets == dc
            self._pending_[int(dc)] = risk_features(
                free[dc], float(demands[on_dc].sum()), int(on_dc.sum()), total[dc])
        return targets

    def observe_outcome(self, obs, targets, outcome) -> None:
        pending = getattr(self, "_pending_", None)
        if pending is None:
            return
        if outcome.verdict is Verdict.ACCEPTED:
            for dc, feats in pending.items():
                self.memories_[dc].append((feats, 1.0))
        elif outcome.verdict is Verdict.REJECTED_CPU and outcome.failing_dc is not None:
            feats = pending.get(int(outcome.failing_dc))
            if feats is not None:
                self.memories_[int(outcome.failing_dc)].append((feats, 0.0))
        self._pending_ = None
        self.request_count_ += 1
        if self.request_count_ % self.update_every == 0:
            for model, memory, opt in zip(self.models_, self.memories_, self.optimizers_):
                risk_update(model, memory, opt)

    def save(self, path) -> None:
        if not hasattr(self, "models_"):
            raise NotFittedError("policy has no risk models; call fit() or build()")
        arrays = {}
        for i, model in enumerate(self.models_):
            arrays.update(module_arrays(model, f"risk{i}."))
        meta = {"algo": self.algo, "num_dcs": len(self.models_), "params": self.get_params()}
        save_checkpoint(path, arrays, meta)

    @classmethod
    def load(cls, path) -> "RailsPolicy":
        arrays, meta = load_checkpoint(path)
        policy = cls(**meta["params"])
        policy.build(meta["num_dcs"])
        for i, model in enumerate(policy.models_):
            load_module_arrays(model, arrays, f"risk{i}.")
        return policy
