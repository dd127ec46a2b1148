import numpy as np
import pytest
import torch
import torch.nn as nn

from sfclab.nn import (AdamW, adamw_step, init_parameters, load_checkpoint,
                       load_module_arrays, module_arrays, polyak_update,
                       save_checkpoint)


class TestAdamwStep:
    def test_zero_gradient_no_decay_leaves_unchanged(self):
        p = torch.tensor([1.0, -2.0])
        m = torch.zeros(2)
        v = torch.zeros(2)
        adamw_step(p, torch.zeros(2), m, v, step=1, lr=0.1, weight_decay=0.0)
        assert torch.equal(p, torch.tensor([1.0, -2.0]))

    def test_hand_evaluated_first_step(self):
        # m_hat = g, v_hat = g^2 after bias correction: step = lr*g/(|g|+eps)
        p = torch.tensor([1.0])
        m = torch.zeros(1)
        v = torch.zeros(1)
        adamw_step(p, torch.tensor([1.0]), m, v, step=1, lr=0.1, weight_decay=0.0)
        assert p.item() == pytest.approx(0.9, abs=1e-6)

    def test_decoupled_shrinkage(self):
        p = torch.tensor([2.0])
        adamw_step(p, torch.zeros(1), torch.zeros(1), torch.zeros(1), step=1,
                   lr=0.1, weight_decay=0.01)
        assert p.item() == pytest.approx(2.0 * (1 - 0.1 * 0.01))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            adamw_step(torch.zeros(2), torch.zeros(3), torch.zeros(2),
                       torch.zeros(2), step=1, lr=0.1)

    def test_matches_torch_adamw(self):
        # cross-check several steps against the reference implementation
        torch.manual_seed(0)
        p_ours = torch.randn(4, 3)
        p_ref = p_ours.clone().requires_grad_(True)
        opt_ref = torch.optim.AdamW([p_ref], lr=1e-2, betas=(0.9, 0.999),
                                    eps=1e-8, weight_decay=0.01)
        m = torch.zeros_like(p_ours)
        v = torch.zeros_like(p_ours)
        for step in range(1, 6):
            grad = torch.randn(4, 3)
            adamw_step(p_ours, grad, m, v, step, lr=1e-2, weight_decay=0.01)
            p_ref.grad = grad.clone()
            opt_ref.step()
        assert torch.allclose(p_ours, p_ref.detach(), atol=1e-6)


class TestAdamwClass:
    def test_steps_all_parameters(self):
        lin = nn.Linear(3, 2)
        opt = AdamW(lin, lr=0.05, weight_decay=0.0)
        before = [p.detach().clone() for p in lin.parameters()]
        loss = lin(torch.ones(1, 3)).sum()
        loss.backward()
        opt.step()
        for p, b in zip(lin.parameters(), before):
            assert not torch.equal(p, b)
        opt.zero_grad()
        assert all(p.grad is None for p in lin.parameters())


class TestPolyak:
    def test_exact_elementwise(self, rng):
        # float64 keeps the fused update and the reference expression identical
        online = nn.Linear(4, 4).to(torch.float64)
        target = nn.Linear(4, 4).to(torch.float64)
        init_parameters(online, np.random.default_rng(0))
        init_parameters(target, np.random.default_rng(1))
        expected = [(1 - 1e-3) * pt.detach() + 1e-3 * po.detach()
                    for pt, po in zip(target.parameters(), online.parameters())]
        polyak_update(target, online, 1e-3)
        for pt, exp in zip(target.parameters(), expected):
            assert (pt.detach() - exp).abs().max().item() <= 1e-15

    def test_tau_one_copies(self):
        online = nn.Linear(4, 4)
        target = nn.Linear(4, 4)
        polyak_update(target, online, 1.0)
        for pt, po in zip(target.parameters(), online.parameters()):
            assert torch.equal(pt, po)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "ckpt.npz"
        arrays = {"layer.weight": np.arange(6.0).reshape(2, 3),
                  "layer.bias": np.zeros(2)}
        save_checkpoint(path, arrays, meta={"kind": "test"})
        loaded, meta = load_checkpoint(path)
        assert meta == {"kind": "test"}
        for key, value in arrays.items():
            assert np.array_equal(loaded[key], value)

    def test_module_roundtrip(self, tmp_path):
        lin = nn.Linear(3, 2)
        init_parameters(lin, np.random.default_rng(3))
        path = tmp_path / "module.npz"
        save_checkpoint(path, module_arrays(lin, "lin."))
        clone = nn.Linear(3, 2)
        arrays, _ = load_checkpoint(path)
        load_module_arrays(clone, arrays, "lin.")
        for a, b in zip(lin.parameters(), clone.parameters()):
            assert torch.equal(a, b)

    def test_version_rejected(self, tmp_path):
        path = tmp_path / "bad.npz"
        import json
        np.savez(path, __meta__=np.array(json.dumps(
            {"format": "sfclab-checkpoint", "version": 99, "meta": {}})))
        with pytest.raises(ValueError):
            load_checkpoint(path)

    def test_missing_tensor(self, tmp_path):
        lin = nn.Linear(3, 2)
        path = tmp_path / "partial.npz"
        save_checkpoint(path, {"lin.weight": lin.weight.detach().numpy()})
        arrays, _ = load_checkpoint(path)
        with pytest.raises(KeyError):
            load_module_arrays(nn.Linear(3, 2), arrays, "lin.")
