import numpy as np
import pytest
import torch

from sfclab.agents.sdac import (ActorNet, CriticNet, SdacAgent, SeqTransition,
                                arn_normalize, epsilon_lope)
from sfclab.env import SfcEnv, state_dim
from sfclab.nn import init_parameters, mean_pool, softmax
from sfclab.substrate import generate_substrate
from sfclab.traffic import generate_workload

M = 4
D = state_dim(M)


def small_actor(seed=0, dtype=torch.float32):
    net = ActorNet(D, M, d_model=16, num_heads=2, ff_dim=32, num_layers=2,
                   max_len=12).to(dtype)
    init_parameters(net, np.random.default_rng(seed))
    return net


def small_critic(seed=1, dtype=torch.float32):
    net = CriticNet(D, M, d_model=16, num_heads=2, ff_dim=32, num_layers=2,
                    max_len=12).to(dtype)
    init_parameters(net, np.random.default_rng(seed))
    return net


class TestArnNormalize:
    def test_accept(self):
        assert arn_normalize(1, 0.99) == pytest.approx(0.01)

    def test_reject(self):
        assert arn_normalize(0, 0.99) == 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            arn_normalize(1.0, 1.0)
        with pytest.raises(ValueError):
            arn_normalize(1.0, 0.0)
        with pytest.raises(ValueError):
            arn_normalize(1.5, 0.99)

    def test_discounted_sum_bounded(self, rng):
        # randomized bound check over arbitrary reward streams in [0, 1]
        gamma = 0.99
        discount = gamma ** np.arange(400)
        rewards = rng.random((2000, 400))
        returns = (rewards * (1 - gamma)) @ discount
        assert returns.max() <= 1.0 + 1e-9


class TestEpsilonLope:
    def test_zscore_then_softmax(self):
        out = epsilon_lope(np.array([1.0, 2.0, 3.0]), 0.0, 2.0)
        z = np.array([-1.22474487, 0.0, 1.22474487])
        expected = np.exp(z - z.max())
        expected /= expected.sum()
        assert np.allclose(out, expected, atol=1e-6)

    def test_argmax_preserved_at_zero_epsilon(self, rng):
        logits = rng.standard_normal((2000, M)) * rng.uniform(0.1, 10)
        out = epsilon_lope(logits, 0.0, 2.0)
        assert (out.argmax(axis=1) == logits.argmax(axis=1)).all()

    def test_constant_row_uniform(self):
        out = epsilon_lope(np.array([5.0, 5.0, 5.0]), 0.0, 2.0)
        assert np.allclose(out, 1 / 3)

    def test_rows_on_simplex(self, rng):
        out = epsilon_lope(rng.standard_normal((100, M)), 1.0, 2.0, rng)
        assert np.allclose(out.sum(axis=1), 1.0, atol=1e-9)
        assert (out > 0).all()

    @pytest.mark.slow
    def test_noise_decreases_argmax_concentration(self):
        rng = np.random.default_rng(5)
        logits = np.array([0.5, 1.5, 0.0, -0.5])
        rows = np.tile(logits, (100_000, 1))
        noisy = epsilon_lope(rows, 1.0, 2.0, rng)
        clean = epsilon_lope(rows, 0.0, 2.0)
        counts = np.bincount(noisy.argmax(axis=1), minlength=M) / len(rows)
        assert (clean.argmax(axis=1) == 1).all()
        # entropy of the noisy argmax distribution strictly above the
        # deterministic baseline (which is zero)
        entropy = -(counts[counts > 0] * np.log(counts[counts > 0])).sum()
        assert entropy > 0.1
        assert counts[1] < 1.0

    def test_validation(self, rng):
        with pytest.raises(ValueError):
            epsilon_lope(np.array([1.0, 2.0]), 1.5, 2.0, rng)
        with pytest.raises(ValueError):
            epsilon_lope(np.array([1.0]), 0.0, 2.0)
        with pytest.raises(ValueError):
            epsilon_lope(np.array([1.0, 2.0]), 0.5, 2.0, None)


class TestActor:
    def test_uniform_rows_with_zero_head(self, rng):
        actor = small_actor()
        with torch.no_grad():
            actor.head.weight.zero_()
            actor.head.bias.zero_()
        state = torch.as_tensor(rng.random((3, D)), dtype=torch.float32)
        probs = softmax(actor(state), dim=-1)
        assert torch.allclose(probs, torch.full((3, M), 1 / M))

    def test_output_shape(self, rng):
        actor = small_actor()
        for n in (1, 4, 9):
            state = torch.as_tensor(rng.random((n, D)), dtype=torch.float32)
            assert actor(state).shape == (n, M)

    def test_identical_tokens_with_equal_pe_rows(self, rng):
        # duplicate tokens produce identical logits only when their positional
        # rows agree, so compare via a crafted equal-PE network
        actor = small_actor()
        with torch.no_grad():
            actor.pe[1] = actor.pe[0]
        row = rng.random(D).astype(np.float32)
        state = torch.as_tensor(np.stack([row, row]))
        logits = actor(state)
        assert torch.allclose(logits[0], logits[1], atol=1e-6)

    def test_distinct_pe_rows_break_symmetry(self, rng):
        actor = small_actor()
        row = rng.random(D).astype(np.float32)
        state = torch.as_tensor(np.stack([row, row]))
        logits = actor(state)
        assert not torch.allclose(logits[0], logits[1], atol=1e-6)


class TestCritic:
    def test_zero_head_outputs_bias(self, rng):
        critic = small_critic()
        with torch.no_grad():
            critic.head.weight.zero_()
            critic.head.bias.fill_(0.625)
        state = torch.as_tensor(rng.random((3, D)), dtype=torch.float32)
        actions = torch.full((3, M), 1 / M)
        assert critic(state, actions).item() == pytest.approx(0.625)

    def test_padding_invariance(self, rng):
        critic = small_critic()
        state = torch.as_tensor(rng.random((1, 3, D)), dtype=torch.float32)
        actions = torch.full((1, 3, M), 1 / M)
        mask = torch.ones(1, 3, dtype=torch.bool)
        q_plain = critic(state, actions, mask)
        pad_state = torch.cat([state, torch.rand(1, 2, D)], dim=1)
        pad_actions = torch.cat([actions, torch.full((1, 2, M), 1 / M)], dim=1)
        pad_mask = torch.cat([mask, torch.zeros(1, 2, dtype=torch.bool)], dim=1)
        q_padded = critic(pad_state, pad_actions, pad_mask)
        assert torch.allclose(q_plain, q_padded, atol=1e-6)

    def test_non_simplex_rejected(self, rng):
        critic = small_critic()
        state = torch.as_tensor(rng.random((2, D)), dtype=torch.float32)
        bad = torch.full((2, M), 0.3)
        with pytest.raises(ValueError):
            critic(state, bad)

    def test_action_gradient_matches_finite_differences(self, rng):
        critic = small_critic(dtype=torch.float64)
        state = torch.as_tensor(rng.random((3, D)))
        actions = torch.as_tensor(epsilon_lope(rng.standard_normal((3, M)), 0.0, 2.0))
        actions.requires_grad_(True)
        q = critic(state, actions)
        (grad,) = torch.autograd.grad(q, actions)
        h = 5e-7  # stays inside the critic's simplex tolerance
        for i in range(3):
            for j in range(M):
                plus = actions.detach().clone()
                plus[i, j] += h
                minus = actions.detach().clone()
                minus[i, j] -= h
                with torch.no_grad():
                    fd = (critic(state, plus) - critic(state, minus)).item() / (2 * h)
                rel = abs(fd - grad[i, j].item()) / max(abs(fd), abs(grad[i, j].item()), 1e-6)
                assert rel <= 1e-4


class TestTrainStep:
    def _agent(self, **kw):
        params = dict(d_model=16, num_heads=2, ff_dim=32, num_layers=2,
                      batch_size=4, seed=0, max_len=12)
        params.update(kw)
        return SdacAgent(**params).build(M)

    def _batch(self, rng, size=6, with_terminal=True):
        batch = []
        for i in range(size):
            n = int(rng.integers(2, 6))
            state = rng.random((n, D)).astype(np.float32)
            actions = epsilon_lope(rng.standard_normal((n, M)), 0.3, 2.0, rng).astype(np.float32)
            terminal = with_terminal and i % 4 == 3
            nxt = None if terminal else rng.random((int(rng.integers(2, 6)), D)).astype(np.float32)
            batch.append(SeqTransition(state, actions, float(rng.random() * 0.01), nxt, terminal))
        return batch

    def test_losses_match_per_sample_recomputation(self, rng):
        # lr_critic=0 makes the in-step critic update a no-op, so the actor
        # loss (computed after it) is reproducible from the pre-step nets
        agent = self._agent(lr_critic=0.0, weight_decay=0.0)
        batch = self._batch(rng)
        expected_targets = []
        for tr in batch:
            if tr.terminal:
                expected_targets.append(tr.reward)
                continue
            s = torch.as_tensor(tr.next_state)
            with torch.no_grad():
                logits = agent.actor_target_(s)
                actions = softmax(logits, dim=-1)
                q = agent.critic_target_(s, actions)
            expected_targets.append(tr.reward + agent.gamma * float(q))
        qs, policy_qs = [], []
        with torch.no_grad():
            for tr in batch:
                s = torch.as_tensor(tr.state)
                qs.append(float(agent.critic_(s, torch.as_tensor(tr.actions))))
                pol = softmax(agent.actor_(s), dim=-1)
                policy_qs.append(float(agent.critic_(s, pol)))
        expected_closs = float(np.mean((np.array(qs) - np.array(expected_targets)) ** 2))
        expected_aloss = -float(np.mean(policy_qs))
        closs, aloss = agent.train_on_batch(batch)
        assert closs == pytest.approx(expected_closs, abs=1e-6)
        assert aloss == pytest.approx(expected_aloss, abs=1e-6)

    def test_critic_loss_matches_recomputation_default_config(self, rng):
        # the critic loss alone is pre-step state under any learning rates
        agent = self._agent()
        batch = self._batch(rng)
        targets = []
        for tr in batch:
            if tr.terminal:
                targets.append(tr.reward)
                continue
            s = torch.as_tensor(tr.next_state)
            with torch.no_grad():
                actions = softmax(agent.actor_target_(s), dim=-1)
                targets.append(tr.reward + agent.gamma * float(agent.critic_target_(s, actions)))
        with torch.no_grad():
            qs = [float(agent.critic_(torch.as_tensor(tr.state), torch.as_tensor(tr.actions)))
                  for tr in batch]
        expected = float(np.mean((np.array(qs) - np.array(targets)) ** 2))
        closs, _ = agent.train_on_batch(batch)
        assert closs == pytest.approx(expected, abs=1e-6)

    def test_tau_one_copies_targets(self, rng):
        agent = self._agent(tau=1.0)
        agent.train_on_batch(self._batch(rng))
        for po, pt in zip(agent.actor_.parameters(), agent.actor_target_.parameters()):
            assert torch.equal(po, pt)
        for po, pt in zip(agent.critic_.parameters(), agent.critic_target_.parameters()):
            assert torch.equal(po, pt)

    def test_actor_step_leaves_critic_frozen(self, rng):
        agent = self._agent(lr_critic=0.0, weight_decay=0.0)
        critic_before = [p.detach().clone() for p in agent.critic_.parameters()]
        agent.train_on_batch(self._batch(rng))
        for p, b in zip(agent.critic_.parameters(), critic_before):
            assert torch.equal(p, b)

    def test_actor_gradients_flow(self, rng):
        agent = self._agent()
        actor_before = [p.detach().clone() for p in agent.actor_.parameters()]
        agent.train_on_batch(self._batch(rng))
        changed = sum(not torch.equal(p, b)
                      for p, b in zip(agent.actor_.parameters(), actor_before))
        assert changed == len(actor_before)


class TestEpisode:
    def _env(self, n_requests=20, seed=3):
        net = generate_substrate(M, 0.9, [8], (0.3, 0.6), 1.0, seed=seed)
        wl = generate_workload(n_requests, M, seed=seed + 1)
        return SfcEnv(net, wl), wl

    def test_single_request_workload_terminal(self):
        env, _ = self._env(n_requests=1)
        agent = SdacAgent(d_model=16, num_heads=2, ff_dim=32, num_layers=2,
                          batch_size=4, episodes=1, seed=0).build(M)
        stats = agent.run_episode(env, env.workload, np.random.default_rng(0))
        items = agent.buffer_.snapshot()
        assert len(items) == 1
        assert items[0].terminal
        assert items[0].next_state is None

    def test_episode_acceptance_matches_env_counter(self):
        env, wl = self._env()
        agent = SdacAgent(d_model=16, num_heads=2, ff_dim=32, num_layers=2,
                          batch_size=8, episodes=1, seed=0).build(M)
        stats = agent.run_episode(env, wl, np.random.default_rng(0))
        assert stats["accepted"] == env.accepted_count

    def test_greedy_evaluation_deterministic(self):
        env, wl = self._env()
        agent = SdacAgent(d_model=16, num_heads=2, ff_dim=32, num_layers=2,
                          batch_size=8, episodes=1, seed=0)
        env.set_workload(wl)
        agent.fit(env)
        from sfclab.agents.base import evaluate_policy
        a = evaluate_policy(env, agent, wl)
        b = evaluate_policy(env, agent, wl)
        assert a == b

    def test_stored_rows_on_simplex(self):
        env, wl = self._env()
        agent = SdacAgent(d_model=16, num_heads=2, ff_dim=32, num_layers=2,
                          batch_size=8, episodes=1, seed=0).build(M)
        agent.run_episode(env, wl, np.random.default_rng(0))
        for tr in agent.buffer_.snapshot():
            assert np.allclose(tr.actions.sum(axis=1), 1.0, atol=1e-5)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path, rng):
        env_net = generate_substrate(M, 0.9, [8], (0.3, 0.6), 1.0, seed=5)
        wl = generate_workload(10, M, seed=6)
        env = SfcEnv(env_net, wl)
        agent = SdacAgent(d_model=16, num_heads=2, ff_dim=32, num_layers=2,
                          batch_size=4, episodes=1, seed=0)
        agent.fit(env)
        path = tmp_path / "sdac.npz"
        agent.save(path)
        clone = SdacAgent.load(path)
        state = rng.random((3, D)).astype(np.float32)
        assert np.allclose(clone.logits(state), agent.logits(state), atol=0)
        assert clone.epsilon_ == agent.epsilon_
