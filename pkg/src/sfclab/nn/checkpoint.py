"""Checkpoint container: named arrays in an npz archive with a versioned header."""

from __future__ import annotations

import json

import numpy as np
import torch
import torch.nn as nn

FORMAT = "sfclab-checkpoint"
VERSION = 1
_META_KEY = "__meta__"


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    if _META_KEY in arrays:
        raise ValueError(f"{_META_KEY!r} is reserved")
    header = {"format": FORMAT, "version": VERSION, "meta": meta or {}}
    payload = {k: np.asarray(v) for k, v in arrays.items()}
    np.savez_compressed(path, **{_META_KEY: np.array(json.dumps(header))}, **payload)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with np.load(path, allow_pickle=False) as npz:
        if _META_KEY not in npz:
            raise ValueError("not a checkpoint: missing header")
        header = json.loads(str(npz[_META_KEY]))
        if header.get("format") != FORMAT:
            raise ValueError(f"unknown checkpoint format {header.get('format')!r}")
        if header.get("version") != VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        arrays = {k: npz[k] for k in npz.files if k != _META_KEY}
    return arrays, header["meta"]


def module_arrays(module: nn.Module, prefix: str = "") -> dict[str, np.ndarray]:
    return {f"{prefix}{name}": param.detach().cpu().numpy()
            for name, param in module.named_parameters()}


def load_module_arrays(module: nn.Module, arrays: dict[str, np.ndarray],
                       prefix: str = "") -> None:
    with torch.no_grad():
        for name, param in module.named_parameters():
            key = f"{prefix}{name}"
            if key not in arrays:
                raise KeyError(f"checkpoint missing tensor {key!r}")
            value = np.asarray(arrays[key])
            if tuple(value.shape) != tuple(param.shape):
                raise ValueError(f"shape mismatch for {key!r}")
            param.copy_(torch.as_tensor(value, dtype=param.dtype))
