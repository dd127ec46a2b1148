"""Differentiable building blocks: ops, encoder layers, optimizer, checkpoints."""

from .ops import backward, gelu, layer_norm, mean_pool, sinusoidal_pe, softmax
from .layers import MultiHeadAttention, FeedForward, TransformerEncoder, TransformerEncoderLayer, init_parameters
from .optim import AdamW, adamw_step, polyak_update
from .checkpoint import load_checkpoint, save_checkpoint, module_arrays, load_module_arrays

__all__ = [
    "softmax", "layer_norm", "gelu", "sinusoidal_pe", "mean_pool", "backward",
    "MultiHeadAttention", "FeedForward", "TransformerEncoderLayer",
    "TransformerEncoder", "init_parameters",
    "AdamW", "adamw_step", "polyak_update",
    "save_checkpoint", "load_checkpoint", "module_arrays", "load_module_arrays",
]
