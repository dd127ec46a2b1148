"""Transformer encoder layers with padding masks, pre- or post-norm."""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn

from .ops import gelu, softmax

# Additive score for masked keys; exp() underflows to exactly 0 after the
# max subtraction, so padded tokens can never leak into real ones.
_MASKED_SCORE = -1e9


class MultiHeadAttention(nn.Module):
    """Scaled dot-product self-attention with per-head projections.

    Padded rows receive zero output and padded columns zero weight.
    """

    def __init__(self, d_model: int, num_heads: int):
        super().__init__()
        if d_model % num_heads != 0:
            raise ValueError("d_model must be divisible by num_heads")
        self.d_model = d_model
        self.num_heads = num_heads
        self.d_head = d_model // num_heads
        self.w_q = nn.Linear(d_model, d_model, bias=False)
        self.w_k = nn.Linear(d_model, d_model, bias=False)
        self.w_v = nn.Linear(d_model, d_model, bias=False)
        self.w_out = nn.Linear(d_model, d_model)

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        squeeze = x.dim() == 2
        if squeeze:
            x = x.unsqueeze(0)
            mask = mask.unsqueeze(0) if mask is not None else None
        b, n, _ = x.shape
        h, dk = self.num_heads, self.d_head

        def split(t):
            return t.view(b, n, h, dk).transpose(1, 2)

        q, k, v = split(self.w_q(x)), split(self.w_k(x)), split(self.w_v(x))
        scores = q @ k.transpose(-2, -1) / math.sqrt(dk)
        if mask is not None:
            scores = scores.masked_fill(~mask[:, None, None, :], _MASKED_SCORE)
        attn = softmax(scores, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, self.d_model)
        out = self.w_out(out)
        if mask is not None:
            out = out * mask.unsqueeze(-1).to(out.dtype)
        return out.squeeze(0) if squeeze else out


class FeedForward(nn.Module):
    def __init__(self, d_model: int, ff_dim: int):
        super().__init__()
        self.lin1 = nn.Linear(d_model, ff_dim)
        self.lin2 = nn.Linear(ff_dim, d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.lin2(gelu(self.lin1(x)))


class TransformerEncoderLayer(nn.Module):
    """One encoder layer; ``variant`` picks pre- or post-norm residuals."""

    def __init__(self, d_model: int, num_heads: int, ff_dim: int,
                 variant: str = "pre_norm"):
        super().__init__()
        if variant not in ("pre_norm", "post_norm"):
            raise ValueError(f"unknown variant {variant!r}")
        self.variant = variant
        self.attn = MultiHeadAttention(d_model, num_heads)
        self.ff = FeedForward(d_model, ff_dim)
        self.norm1 = nn.LayerNorm(d_model, eps=1e-5)
        self.norm2 = nn.LayerNorm(d_model, eps=1e-5)

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        if self.variant == "pre_norm":
            x = x + self.attn(self.norm1(x), mask)
            x = x + self.ff(self.norm2(x))
        else:
            x = self.norm1(x + self.attn(x, mask))
            x = self.norm2(x + self.ff(x))
        if mask is not None:
            x = x * mask.unsqueeze(-1).to(x.dtype)
        return x


class TransformerEncoder(nn.Module):
    def __init__(self, num_layers: int, d_model: int, num_heads: int,
                 ff_dim: int, variant: str = "pre_norm"):
        super().__init__()
        self.layers = nn.ModuleList([
            TransformerEncoderLayer(d_model, num_heads, ff_dim, variant)
            for _ in range(num_layers)
        ])

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        for layer in self.layers:
            x = layer(x, mask)
        return x


def init_parameters(module: nn.Module, rng: np.random.Generator) -> None:
    """Deterministic, generator-driven init: U(+-1/sqrt(fan_in)) weights.

    Walks parameters in registration order so a given generator state always
    produces the same network, independent of torch's global RNG.
    """
    with torch.no_grad():
        for name, param in module.named_parameters():
            if param.dim() >= 2:
                bound = 1.0 / math.sqrt(param.shape[1])
                values = rng.uniform(-bound, bound, size=tuple(param.shape))
                param.copy_(torch.as_tensor(values, dtype=param.dtype))
            elif name.endswith("weight"):  # layer-norm gains
                param.fill_(1.0)
            else:
                param.zero_()
