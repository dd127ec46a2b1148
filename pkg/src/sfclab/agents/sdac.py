"""Sequence-aware differentiable actor-critic partitioning agent.

The actor reads the whole VNF token sequence through a pre-norm transformer
encoder and emits one relaxed (softmax) DC distribution per VNF; the critic
scores the full sequence of state-action tokens with a mean-pooled encoder.
Training is fully differentiable: the actor is updated through the critic's
value of its own relaxed actions.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from sklearn.exceptions import NotFittedError

from ..env import state_dim
from ..nn.layers import TransformerEncoder, init_parameters
from ..nn.ops import mean_pool, sinusoidal_pe, softmax
from ..nn.optim import AdamW, polyak_update
from ..nn.checkpoint import load_checkpoint, load_module_arrays, module_arrays, save_checkpoint
from ..validation import check_discount, check_probability
from .base import BasePolicy, evaluate_policy
from .replay import ReplayBuffer

_SIMPLEX_TOL = 1e-6


def arn_normalize(reward: float, gamma: float) -> float:
    """Scale a [0, 1] reward by (1 - gamma) so discounted returns stay in [0, 1]."""
    check_discount(gamma)
    if not 0.0 <= reward <= 1.0:
        raise ValueError(f"reward must lie in [0, 1], got {reward}")
    return (1.0 - gamma) * reward


def epsilon_lope(logits: np.ndarray, epsilon: float, c: float,
                 rng: np.random.Generator | None = None,
                 std_floor: float = 1e-8) -> np.ndarray:
    """Exploration on the logit level: z-score rows, add scaled Gaussian noise,
    then softmax.

    At epsilon = 0 the z-score is monotone, so the row argmax is preserved
    exactly.  Rows use population standard deviation with a floor for
    degenerate constant rows.
    """
    check_probability(epsilon, "epsilon")
    logits = np.asarray(logits, dtype=np.float64)
    squeeze = logits.ndim == 1
    if squeeze:
        logits = logits[None, :]
    if logits.shape[1] < 2:
        raise ValueError("need at least two DCs to perturb logits")
    mu = logits.mean(axis=1, keepdims=True)
    sd = np.maximum(logits.std(axis=1, keepdims=True), std_floor)
    z = (logits - mu) / sd
    if epsilon > 0.0:
        if rng is None:
            raise ValueError("rng required when epsilon > 0")
        z = z + epsilon * c * rng.standard_normal(z.shape)
    z -= z.max(axis=1, keepdims=True)
    exp = np.exp(z)
    actions = exp / exp.sum(axis=1, keepdims=True)
    return actions[0] if squeeze else actions


class ActorNet(nn.Module):
    """Token encoder emitting per-VNF logits over target DCs."""

    def __init__(self, in_dim: int, num_dcs: int, d_model: int = 128,
                 num_heads: int = 8, ff_dim: int = 512, num_layers: int = 3,
                 max_len: int = 16):
        super().__init__()
        self.in_proj = nn.Linear(in_dim, d_model)
        self.encoder = TransformerEncoder(num_layers, d_model, num_heads,
                                          ff_dim, variant="pre_norm")
        self.head = nn.Linear(d_model, num_dcs)
        self.register_buffer("pe", sinusoidal_pe(max_len, d_model), persistent=False)

    def forward(self, states: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        n = states.shape[-2]
        h = self.in_proj(states) + self.pe[:n]
        h = self.encoder(h, mask)
        return self.head(h)


class CriticNet(nn.Module):
    """Sequence critic over concatenated [state; relaxed action] tokens."""

    def __init__(self, in_dim: int, num_dcs: int, d_model: int = 128,
                 num_heads: int = 8, ff_dim: int = 512, num_layers: int = 3,
                 max_len: int = 16):
        super().__init__()
        self.num_dcs = num_dcs
        self.in_proj = nn.Linear(in_dim + num_dcs, d_model)
        self.encoder = TransformerEncoder(num_layers, d_model, num_heads,
                                          ff_dim, variant="pre_norm")
        self.head = nn.Linear(d_model, 1)
        self.register_buffer("pe", sinusoidal_pe(max_len, d_model), persistent=False)

    def forward(self, states: torch.Tensor, actions: torch.Tensor,
                mask: torch.Tensor | None = None) -> torch.Tensor:
        _validate_simplex(actions, mask)
        n = states.shape[-2]
        h = self.in_proj(torch.cat([states, actions], dim=-1)) + self.pe[:n]
        h = self.encoder(h, mask)
        pooled = mean_pool(h, mask)
        return self.head(pooled).squeeze(-1)


def _validate_simplex(actions: torch.Tensor, mask: torch.Tensor | None) -> None:
    sums = actions.sum(dim=-1)
    err = (sums - 1.0).abs()
    if mask is not None:
        err = torch.where(mask, err, torch.zeros_like(err))
    if bool((err > _SIMPLEX_TOL).any()):
        raise ValueError("action rows must lie on the probability simplex")


@dataclass
class SeqTransition:
    state: np.ndarray             # (n, d) VNF tokens
    actions: np.ndarray           # (n, m) relaxed rows as executed
    reward: float                 # normalized
    next_state: np.ndarray | None
    terminal: bool


def _collate(states: list[np.ndarray], dtype=torch.float32):
    lens = [s.shape[0] for s in states]
    n_max = max(lens)
    width = states[0].shape[1]
    out = torch.zeros(len(states), n_max, width, dtype=dtype)
    mask = torch.zeros(len(states), n_max, dtype=torch.bool)
    for i, s in enumerate(states):
        out[i, :s.shape[0]] = torch.as_tensor(s, dtype=dtype)
        mask[i, :s.shape[0]] = True
    return out, mask


def _masked_softmax_rows(logits: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Row softmax that leaves padded rows uniform (they stay masked downstream)."""
    probs = softmax(logits, dim=-1)
    uniform = torch.full_like(probs, 1.0 / probs.shape[-1])
    return torch.where(mask.unsqueeze(-1), probs, uniform)


class SdacAgent(BasePolicy):
    """Transformer actor-critic with logit-perturbation exploration."""

    algo = "sdac"
    trainable = True

    def __init__(self, d_model=128, num_heads=8, ff_dim=512, num_layers=3,
                 gamma=0.99, lr_actor=1e-5, lr_critic=1e-4, tau=1e-3,
                 batch_size=256, buffer_capacity=1_000_000, episodes=15,
                 epsilon_start=1.0, epsilon_decrement=0.1, epsilon_floor=0.1,
                 noise_scale=2.0, train_every=1, weight_decay=0.01,
                 normalize_returns=True, head_init_scale=1.0, max_len=16, seed=0):
        self.d_model = d_model
        self.num_heads = num_heads
        self.ff_dim = ff_dim
        self.num_layers = num_layers
        self.gamma = gamma
        self.lr_actor = lr_actor
        self.lr_critic = lr_critic
        self.tau = tau
        self.batch_size = batch_size
        self.buffer_capacity = buffer_capacity
        self.episodes = episodes
        self.epsilon_start = epsilon_start
        self.epsilon_decrement = epsilon_decrement
        self.epsilon_floor = epsilon_floor
        self.noise_scale = noise_scale
        self.train_every = train_every
        self.weight_decay = weight_decay
        self.normalize_returns = normalize_returns
        self.head_init_scale = head_init_scale
        self.max_len = max_len
        self.seed = seed

    # -- setup ---------------------------------------------------------------

    def build(self, num_dcs: int, rng: np.random.Generator | None = None) -> "SdacAgent":
        rng = rng or np.random.default_rng(self.seed)
        self.num_dcs_ = num_dcs
        d = state_dim(num_dcs)
        kwargs = dict(d_model=self.d_model, num_heads=self.num_heads,
                      ff_dim=self.ff_dim, num_layers=self.num_layers,
                      max_len=self.max_len)
        self.actor_ = ActorNet(d, num_dcs, **kwargs)
        init_parameters(self.actor_, rng)
        self.critic_ = CriticNet(d, num_dcs, **kwargs)
        init_parameters(self.critic_, rng)
        with torch.no_grad():
            self.actor_.head.weight.mul_(self.head_init_scale)
            self.critic_.head.weight.mul_(self.head_init_scale)
        self.actor_target_ = copy.deepcopy(self.actor_)
        self.critic_target_ = copy.deepcopy(self.critic_)
        self.actor_opt_ = AdamW(self.actor_, lr=self.lr_actor, weight_decay=self.weight_decay)
        self.critic_opt_ = AdamW(self.critic_, lr=self.lr_critic, weight_decay=self.weight_decay)
        self.buffer_ = ReplayBuffer(self.buffer_capacity)
        self.epsilon_ = self.epsilon_start
        self.history_ = []
        return self

    def _check_fitted(self):
        if not hasattr(self, "actor_"):
            raise NotFittedError("agent has no networks; call fit() or build()")

    # -- acting ----------------------------------------------------------------

    def logits(self, state: np.ndarray) -> np.ndarray:
        self._check_fitted()
        with torch.no_grad():
            out = self.actor_(torch.as_tensor(state, dtype=torch.float32))
        return out.numpy()

    def predict(self, obs) -> np.ndarray:
        return self.logits(obs.state).argmax(axis=1)

    # -- training ----------------------------------------------------------------

    def fit(self, env, workload_fn=None, eval_workload=None):
        rng = np.random.default_rng(self.seed)
        self.build(env.net.num_dcs, rng)
        fixed_workload = list(env.workload)
        for episode in range(self.episodes):
            workload = workload_fn(episode) if workload_fn else fixed_workload
            stats = self.run_episode(env, workload, rng)
            record = {"episode": episode, "epsilon": stats["epsilon"],
                      "critic_loss_mean": stats["critic_loss_mean"],
                      "actor_loss_mean": stats["actor_loss_mean"],
                      "train_acceptance": stats["acceptance"]}
            if eval_workload is not None:
                record["eval_reward"] = evaluate_policy(env, self, eval_workload)
            self.history_.append(record)
            self.epsilon_ = max(self.epsilon_floor, self.epsilon_ - self.epsilon_decrement)
        return self

    def run_episode(self, env, workload, rng: np.random.Generator) -> dict:
        """One exploration episode: act, store, train; returns episode stats."""
        self._check_fitted()
        env.set_workload(workload)
        state = env.reset()
        epsilon = self.epsilon_
        done = False
        accepted = 0
        closses, alosses = [], []
        step = 0
        while not done:
            logits = self.logits(state)
            actions = epsilon_lope(logits, epsilon, self.noise_scale, rng)
            reward, next_state, done = env.step(actions)
            accepted += reward
            r = arn_normalize(reward, self.gamma) if self.normalize_returns else float(reward)
            self.buffer_.append(SeqTransition(
                state.astype(np.float32, copy=False),
                actions.astype(np.float32), r, next_state, done))
            step += 1
            if len(self.buffer_) >= self.batch_size and step % self.train_every == 0:
                closs, aloss = self.train_on_batch(self.buffer_.sample(rng, self.batch_size))
                closses.append(closs)
                alosses.append(aloss)
            state = next_state
        return {
            "epsilon": epsilon,
            "acceptance": accepted / len(workload),
            "accepted": accepted,
            "critic_loss_mean": float(np.mean(closses)) if closses else float("nan"),
            "actor_loss_mean": float(np.mean(alosses)) if alosses else float("nan"),
        }

    def train_on_batch(self, batch: list[SeqTransition]) -> tuple[float, float]:
        """Critic MSE step toward Bellman targets, then an actor step on -Q.

        Only the actor optimizer consumes the actor loss; the critic's
        parameters see that gradient but are never stepped on it.
        Variable-length sequences are padded per batch and masked.
        """
        states, mask = _collate([t.state for t in batch])
        actions, _ = _collate([t.actions for t in batch])

        y = torch.as_tensor([t.reward for t in batch], dtype=torch.float32)
        live = [i for i, t in enumerate(batch) if not t.terminal]
        if live:
            next_states, next_mask = _collate([batch[i].next_state for i in live])
            with torch.no_grad():
                next_logits = self.actor_target_(next_states, next_mask)
                next_actions = _masked_softmax_rows(next_logits, next_mask)
                next_q = self.critic_target_(next_states, next_actions, next_mask)
            y[live] += self.gamma * next_q

        q = self.critic_(states, actions, mask)
        critic_loss = F.mse_loss(q, y)
        self.critic_opt_.zero_grad()
        critic_loss.backward()
        self.critic_opt_.step()

        logits = self.actor_(states, mask)
        policy_actions = _masked_softmax_rows(logits, mask)
        actor_loss = -self.critic_(states, policy_actions, mask).mean()
        self.critic_opt_.zero_grad()
        self.actor_opt_.zero_grad()
        actor_loss.backward()
        self.actor_opt_.step()
        self.critic_opt_.zero_grad()

        polyak_update(self.actor_target_, self.actor_, self.tau)
        polyak_update(self.critic_target_, self.critic_, self.tau)
        return float(critic_loss.item()), float(actor_loss.item())

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> None:
        self._check_fitted()
        arrays = {}
        for prefix, module in (("actor.", self.actor_), ("critic.", self.critic_),
                               ("actor_target.", self.actor_target_),
                               ("critic_target.", self.critic_target_)):
            arrays.update(module_arrays(module, prefix))
        arrays.update(self.actor_opt_.state_arrays("actor_opt."))
        arrays.update(self.critic_opt_.state_arrays("critic_opt."))
        arrays["epsilon"] = np.array(self.epsilon_)
        meta = {"algo": self.algo, "num_dcs": self.num_dcs_, "params": self.get_params()}
        save_checkpoint(path, arrays, meta)

    @classmethod
    def load(cls, path) -> "SdacAgent":
        arrays, meta = load_checkpoint(path)
        agent = cls(**meta["params"])
        agent.build(meta["num_dcs"])
        for prefix, module in (("actor.", agent.actor_), ("critic.", agent.critic_),
                               ("actor_target.", agent.actor_target_),
                               ("critic_target.", agent.critic_target_)):
            load_module_arrays(module, arrays, prefix)
        agent.actor_opt_.load_state_arrays(arrays, "actor_opt.")
        agent.critic_opt_.load_state_arrays(arrays, "critic_opt.")
        agent.epsilon_ = float(arrays["epsilon"])
        return agent
