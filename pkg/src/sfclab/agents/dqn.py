"""Double-DQN partitioning agents: per-VNF replay, parallel or sequential selection."""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from sklearn.exceptions import NotFittedError

from ..env import state_dim
from ..nn.layers import init_parameters
from ..nn.ops import gelu, sinusoidal_pe
from ..nn.optim import AdamW, polyak_update
from ..nn.checkpoint import load_checkpoint, load_module_arrays, module_arrays, save_checkpoint
from .base import BasePolicy, evaluate_policy
from .replay import ReplayBuffer
from .sdac import arn_normalize


class ResidualBlock(nn.Module):
    """Pre-activation residual block: x + lin2(gelu(lin1(norm(x))))."""

    def __init__(self, width: int):
        super().__init__()
        self.norm = nn.LayerNorm(width, eps=1e-5)
        self.lin1 = nn.Linear(width, width)
        self.lin2 = nn.Linear(width, width)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.lin2(gelu(self.lin1(self.norm(x))))


class QNetwork(nn.Module):
    """Per-VNF action-value network.

    The chain position enters through a sinusoidal encoding added to the
    input projection.
    """

    def __init__(self, in_dim: int, num_actions: int, hidden: int = 384,
                 num_blocks: int = 2, max_len: int = 16):
        super().__init__()
        self.in_dim = in_dim
        self.in_proj = nn.Linear(in_dim, hidden)
        self.blocks = nn.ModuleList(ResidualBlock(hidden) for _ in range(num_blocks))
        self.head = nn.Linear(hidden, num_actions)
        self.register_buffer("pe", sinusoidal_pe(max_len, hidden), persistent=False)

    def forward(self, features: torch.Tensor, positions: torch.Tensor) -> torch.Tensor:
        if features.shape[-1] != self.in_dim:
            raise ValueError(f"feature width {features.shape[-1]} != {self.in_dim}")
        h = self.in_proj(features) + self.pe[positions]
        for block in self.blocks:
            h = block(h)
        return self.head(h)


@dataclass
class VnfTransition:
    features: np.ndarray          # state row, plus previous-action one-hot when sequential
    position: int
    action: int
    reward: float                 # normalized, shared across the request's VNFs
    next_state: np.ndarray | None  # full state matrix of the next request


def _greedy_rows(net: QNetwork, features: np.ndarray, positions: np.ndarray) -> np.ndarray:
    with torch.no_grad():
        q = net(torch.as_tensor(features, dtype=torch.float32),
                torch.as_tensor(positions, dtype=torch.long)).numpy()
    return q.argmax(axis=1)  # numpy argmax: lowest index wins ties


def select_parallel(net: QNetwork, state: np.ndarray, num_dcs: int,
                    epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """Independent epsilon-greedy pick per VNF row."""
    n = state.shape[0]
    greedy = _greedy_rows(net, state, np.arange(n))
    if epsilon == 0.0:
        return greedy
    explore = rng.random(n) < epsilon
    randoms = rng.integers(0, num_dcs, size=n)
    return np.where(explore, randoms, greedy)


def select_sequential(net: QNetwork, state: np.ndarray, num_dcs: int,
                      epsilon: float, rng: np.random.Generator
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Chain-order epsilon-greedy; each row sees the previous pick's one-hot.

    Returns (targets, features) where features are the rows actually fed to
    the network, previous action included.
    """
    n = state.shape[0]
    if epsilon > 0.0:
        explore = rng.random(n) < epsilon
        randoms = rng.integers(0, num_dcs, size=n)
    targets = np.zeros(n, dtype=np.int64)
    feats = np.zeros((n, state.shape[1] + num_dcs), dtype=np.float32)
    a_prev = np.zeros(num_dcs, dtype=np.float32)
    for i in range(n):
        feats[i, :state.shape[1]] = state[i]
        feats[i, state.shape[1]:] = a_prev
        choice = int(_greedy_rows(net, feats[i:i + 1], np.array([i]))[0])
        if epsilon > 0.0 and explore[i]:
            choice = int(randoms[i])
        targets[i] = choice
        a_prev = np.zeros(num_dcs, dtype=np.float32)
        a_prev[choice] = 1.0
    return targets, feats


def ddqn_targets(online: QNetwork, target: QNetwork, batch: list[VnfTransition],
                 gamma: float, sequential: bool, num_dcs: int) -> torch.Tensor:
    """Bellman targets y = r' + gamma * mean_v Q'(s'_v, argmax_a Q(s'_v, a)).

    Actions over the next request's VNFs come from the online network and are
    evaluated by the target network; terminal transitions keep y = r'.
    """
    if not batch:
        raise ValueError("batch must be non-empty")
    y = np.array([t.reward for t in batch], dtype=np.float64)
    live = [i for i, t in enumerate(batch) if t.next_state is not None]
    if not live:
        return torch.as_tensor(y, dtype=torch.float32)
    states = [batch[i].next_state for i in live]
    if sequential:
        means = _sequential_next_values(online, target, states, num_dcs)
    else:
        means = _parallel_next_values(online, target, states)
    y[live] += gamma * means
    return torch.as_tensor(y, dtype=torch.float32)


def _parallel_next_values(online, target, states) -> np.ndarray:
    rows = np.concatenate(states, axis=0)
    positions = np.concatenate([np.arange(s.shape[0]) for s in states])
    group = np.repeat(np.arange(len(states)), [s.shape[0] for s in states])
    feats = torch.as_tensor(rows, dtype=torch.float32)
    pos = torch.as_tensor(positions, dtype=torch.long)
    with torch.no_grad():
        q_online = online(feats, pos).numpy()
        q_target = target(feats, pos).numpy()
    best = q_online.argmax(axis=1)
    picked = q_target[np.arange(len(best)), best]
    sums = np.zeros(len(states))
    np.add.at(sums, group, picked)
    counts = np.array([s.shape[0] for s in states], dtype=np.float64)
    return sums / counts


def _sequential_next_values(online, target, states, num_dcs) -> np.ndarray:
    lens = np.array([s.shape[0] for s in states])
    width = states[0].shape[1]
    n_max = int(lens.max())
    padded = np.zeros((len(states), n_max, width), dtype=np.float32)
    for i, s in enumerate(states):
        padded[i, :s.shape[0]] = s
    a_prev = np.zeros((len(states), num_dcs), dtype=np.float32)
    sums = np.zeros(len(states))
    for p in range(n_max):
        alive = np.flatnonzero(lens > p)
        feats_np = np.concatenate([padded[alive, p], a_prev[alive]], axis=1)
        feats = torch.as_tensor(feats_np, dtype=torch.float32)
        pos = torch.full((len(alive),), p, dtype=torch.long)
        with torch.no_grad():
            q_online = online(feats, pos).numpy()
            q_target = target(feats, pos).numpy()
        best = q_online.argmax(axis=1)
        sums[alive] += q_target[np.arange(len(best)), best]
        a_prev[alive] = 0.0
        a_prev[alive, best] = 1.0
    return sums / lens


class DdqnAgent(BasePolicy):
    """Double-DQN agent; ``sequential=True`` threads the previous pick."""

    trainable = True

    def __init__(self, sequential=False, hidden_dim=384, num_blocks=2,
                 gamma=0.99, lr=1e-4, tau=1e-3, batch_size=256,
                 buffer_capacity=1_000_000, episodes=15, epsilon_start=1.0,
                 epsilon_decrement=0.1, epsilon_floor=0.1, train_every=1,
                 weight_decay=0.01, normalize_returns=True, head_init_scale=1.0,
                 max_len=16, seed=0):
        self.sequential = sequential
        self.hidden_dim = hidden_dim
        self.num_blocks = num_blocks
        self.gamma = gamma
        self.lr = lr
        self.tau = tau
        self.batch_size = batch_size
        self.buffer_capacity = buffer_capacity
        self.episodes = episodes
        self.epsilon_start = epsilon_start
        self.epsilon_decrement = epsilon_decrement
        self.epsilon_floor = epsilon_floor
        self.train_every = train_every
        self.weight_decay = weight_decay
        self.normalize_returns = normalize_returns
        self.head_init_scale = head_init_scale
        self.max_len = max_len
        self.seed = seed

    @property
    def algo(self) -> str:
        return "seqddqn" if self.sequential else "paraddqn"

    # -- setup -------------------------------------------------------------

    def build(self, num_dcs: int, rng: np.random.Generator | None = None) -> "DdqnAgent":
        """Create networks for a substrate with ``num_dcs`` DCs."""
        rng = rng or np.random.default_rng(self.seed)
        self.num_dcs_ = num_dcs
        in_dim = state_dim(num_dcs) + (num_dcs if self.sequential else 0)
        self.online_ = QNetwork(in_dim, num_dcs, self.hidden_dim,
                                self.num_blocks, self.max_len)
        init_parameters(self.online_, rng)
        with torch.no_grad():
            self.online_.head.weight.mul_(self.head_init_scale)
        self.target_ = copy.deepcopy(self.online_)
        self.optimizer_ = AdamW(self.online_, lr=self.lr, weight_decay=self.weight_decay)
        self.buffer_ = ReplayBuffer(self.buffer_capacity)
        self.history_ = []
        return self

    def _check_fitted(self):
        if not hasattr(self, "online_"):
            raise NotFittedError("agent has no networks; call fit() or build()")

    # -- acting ------------------------------------------------------------

    def _select(self, state: np.ndarray, epsilon: float,
                rng: np.random.Generator | None) -> tuple[np.ndarray, np.ndarray]:
        if self.sequential:
            return select_sequential(self.online_, state, self.num_dcs_, epsilon, rng)
        targets = select_parallel(self.online_, state, self.num_dcs_, epsilon, rng)
        return targets, state.astype(np.float32, copy=False)

    def predict(self, obs) -> np.ndarray:
        self._check_fitted()
        targets, _ = self._select(obs.state, 0.0, None)
        return targets

    # -- training ----------------------------------------------------------

    def fit(self, env, workload_fn=None, eval_workload=None):
        rng = np.random.default_rng(self.seed)
        self.build(env.net.num_dcs, rng)
        epsilon = self.epsilon_start
        fixed_workload = list(env.workload)
        for episode in range(self.episodes):
            workload = workload_fn(episode) if workload_fn else fixed_workload
            env.set_workload(workload)
            state = env.reset()
            done = False
            losses = []
            step = 0
            while not done:
                n = env.current_request.n
                targets, feats = self._select(state, epsilon, rng)
                reward, next_state, done = env.step(targets)
                r = arn_normalize(reward, self.gamma) if self.normalize_returns else float(reward)
                for i in range(n):
                    self.buffer_.append(VnfTransition(
                        feats[i], i, int(targets[i]), r, next_state))
                step += 1
                if len(self.buffer_) >= self.batch_size and step % self.train_every == 0:
                    losses.append(self.train_on_batch(self.buffer_.sample(rng, self.batch_size)))
                state = next_state
            record = {"episode": episode, "epsilon": epsilon,
                      "loss_mean": float(np.mean(losses)) if losses else float("nan")}
            if eval_workload is not None:
                record["eval_reward"] = evaluate_policy(env, self, eval_workload)
            self.history_.append(record)
            epsilon = max(self.epsilon_floor, epsilon - self.epsilon_decrement)
        return self

    def train_on_batch(self, batch: list[VnfTransition]) -> float:
        """One MSE step on taken-action Q-values plus a Polyak target sync."""
        y = ddqn_targets(self.online_, self.target_, batch, self.gamma,
                         self.sequential, self.num_dcs_)
        feats = torch.as_tensor(np.stack([t.features for t in batch]), dtype=torch.float32)
        pos = torch.as_tensor([t.position for t in batch], dtype=torch.long)
        actions = torch.as_tensor([t.action for t in batch], dtype=torch.long)
        q = self.online_(feats, pos).gather(1, actions.unsqueeze(1)).squeeze(1)
        loss = F.mse_loss(q, y)
        self.optimizer_.zero_grad()
        loss.backward()
        self.optimizer_.step()
        polyak_update(self.target_, self.online_, self.tau)
        return float(loss.item())

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> None:
        self._check_fitted()
        arrays = {}
        arrays.update(module_arrays(self.online_, "online."))
        arrays.update(module_arrays(self.target_, "target."))
        arrays.update(self.optimizer_.state_arrays("opt."))
        meta = {"algo": self.algo, "num_dcs": self.num_dcs_,
                "params": self.get_params()}
        save_checkpoint(path, arrays, meta)

    @classmethod
    def load(cls, path) -> "DdqnAgent":
        arrays, meta = load_checkpoint(path)
        agent = cls(**meta["params"])
        agent.build(meta["num_dcs"])
        load_module_arrays(agent.online_, arrays, "online.")
        load_module_arrays(agent.target_, arrays, "target.")
        agent.optimizer_.load_state_arrays(arrays, "opt.")
        return agent
