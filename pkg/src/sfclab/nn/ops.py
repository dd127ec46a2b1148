"""Tensor ops used by every network in the lab; gradients via reverse mode."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F


def softmax(x: torch.Tensor, dim: int = -1) -> torch.Tensor:
    """Numerically stable softmax (max-subtracted)."""
    shifted = x - x.amax(dim=dim, keepdim=True)
    exp = shifted.exp()
    return exp / exp.sum(dim=dim, keepdim=True)


def layer_norm(x: torch.Tensor, gain: torch.Tensor, bias: torch.Tensor,
               eps: float = 1e-5) -> torch.Tensor:
    """Normalize the last dim to zero mean / unit variance (population stats)."""
    mean = x.mean(dim=-1, keepdim=True)
    var = x.var(dim=-1, unbiased=False, keepdim=True)
    return (x - mean) / torch.sqrt(var + eps) * gain + bias


def gelu(x: torch.Tensor) -> torch.Tensor:
    """GELU, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi)(x + 0.044715 x^3)))."""
    return F.gelu(x, approximate="tanh")


def sinusoidal_pe(n: int, d: int, device=None, dtype=torch.float32) -> torch.Tensor:
    """Interleaved sin/cos positional encoding table, wavelength base 10000."""
    if d % 2 != 0:
        raise ValueError("encoding dimension must be even")
    position = torch.arange(n, device=device, dtype=torch.float64).unsqueeze(1)
    half = torch.arange(d // 2, device=device, dtype=torch.float64)
    angles = position / torch.pow(10000.0, 2.0 * half / d)
    table = torch.empty(n, d, device=device, dtype=torch.float64)
    table[:, 0::2] = torch.sin(angles)
    table[:, 1::2] = torch.cos(angles)
    return table.to(dtype)


def mean_pool(x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
    """Mean over the token axis, restricted to unmasked rows.

    ``x`` is (..., n, d); ``mask`` is (..., n) with True marking real tokens.
    """
    if mask is None:
        return x.mean(dim=-2)
    if not mask.any(dim=-1).all():
        raise ValueError("mean_pool: at least one row must be unmasked")
    weights = mask.to(x.dtype)
    total = (x * weights.unsqueeze(-1)).sum(dim=-2)
    return total / weights.sum(dim=-1, keepdim=True)


def backward(output: torch.Tensor, params) -> list[torch.Tensor]:
    """Reverse-mode gradients of a recorded scalar w.r.t. ``params``."""
    if output.numel() != 1:
        raise ValueError("backward expects a scalar output")
    if output.grad_fn is None:
        raise RuntimeError("backward called without a recorded forward pass")
    return list(torch.autograd.grad(output, list(params), allow_unused=False))
