"""Decoupled-weight-decay Adam and Polyak target updates."""

from __future__ import annotations

from typing import Iterable

import torch
import torch.nn as nn


def adamw_step(param: torch.Tensor, grad: torch.Tensor,
               exp_avg: torch.Tensor, exp_avg_sq: torch.Tensor, step: int,
               lr: float, betas: tuple[float, float] = (0.9, 0.999),
               eps: float = 1e-8, weight_decay: float = 0.01) -> None:
    """One in-place update with bias-corrected moments; ``step`` is 1-based.

    Weight decay is decoupled: the parameter shrinks by lr * weight_decay
    regardless of the gradient.
    """
    if grad.shape != param.shape:
        raise ValueError(f"gradient shape {tuple(grad.shape)} != parameter shape {tuple(param.shape)}")
    beta1, beta2 = betas
    exp_avg.mul_(beta1).add_(grad, alpha=1.0 - beta1)
    exp_avg_sq.mul_(beta2).addcmul_(grad, grad, value=1.0 - beta2)
    bias1 = 1.0 - beta1 ** step
    bias2 = 1.0 - beta2 ** step
    denom = (exp_avg_sq / bias2).sqrt_().add_(eps)
    if weight_decay != 0.0:
        param.mul_(1.0 - lr * weight_decay)
    param.addcdiv_(exp_avg, denom, value=-lr / bias1)


class AdamW:
    """Minimal optimizer over a parameter list (or module)."""

    def __init__(self, params: Iterable[torch.Tensor] | nn.Module, lr: float,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.01):
        if isinstance(params, nn.Module):
            params = params.parameters()
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.exp_avg = [torch.zeros_like(p) for p in self.params]
        self.exp_avg_sq = [torch.zeros_like(p) for p in self.params]

    def step(self) -> None:
        self.step_count += 1
        with torch.no_grad():
            for param, m, v in zip(self.params, self.exp_avg, self.exp_avg_sq):
                if param.grad is None:
                    continue
                adamw_step(param, param.grad, m, v, self.step_count,
                           self.lr, self.betas, self.eps, self.weight_decay)

    def zero_grad(self) -> None:
        for param in self.params:
            param.grad = None

    def state_arrays(self, prefix: str = "") -> dict:
        out = {f"{prefix}step": self.step_count}
        for i, (m, v) in enumerate(zip(self.exp_avg, self.exp_avg_sq)):
            out[f"{prefix}m{i}"] = m.detach().cpu().numpy()
            out[f"{prefix}v{i}"] = v.detach().cpu().numpy()
        return out

    def load_state_arrays(self, arrays: dict, prefix: str = "") -> None:
        self.step_count = int(arrays[f"{prefix}step"])
        for i in range(len(self.params)):
            self.exp_avg[i] = torch.as_tensor(arrays[f"{prefix}m{i}"]).to(self.params[i].dtype)
            self.exp_avg_sq[i] = torch.as_tensor(arrays[f"{prefix}v{i}"]).to(self.params[i].dtype)


def polyak_update(target: nn.Module, online: nn.Module, tau: float) -> None:
    """target <- tau * online + (1 - tau) * target, elementwise."""
    with torch.no_grad():
        for pt, po in zip(target.parameters(), online.parameters()):
            pt.mul_(1.0 - tau).add_(po, alpha=tau)
