"""Small input-validation helpers shared across modules."""

from __future__ import annotations

import numpy as np


def check_probability(value: float, name: str = "probability") -> float:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return float(value)


def check_discount(gamma: float) -> float:
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"discount factor must lie in (0, 1), got {gamma}")
    return float(gamma)


def check_state_matrix(state, num_dcs: int | None = None) -> np.ndarray:
    state = np.asarray(state)
    if state.ndim != 2:
        raise ValueError(f"state matrix must be 2-D, got shape {state.shape}")
    if num_dcs is not None and state.shape[1] != 5 + 4 * num_dcs:
        raise ValueError(
            f"state width {state.shape[1]} does not match 5 + 4*{num_dcs}")
    if not np.isfinite(state).all():
        raise ValueError("state matrix contains non-finite entries")
    return state


def as_assignment(action, n: int, m: int) -> np.ndarray:
    """Decode an action into an int assignment vector of length ``n``.

    Relaxed (n, m) rows decode by argmax; ties go to the lowest DC index.
    """
    arr = np.asarray(action)
    if arr.ndim == 2:
        if arr.shape != (n, m):
            raise ValueError(f"relaxed action shape {arr.shape} != ({n}, {m})")
        targets = arr.argmax(axis=1)
    elif arr.ndim == 1:
        if arr.shape[0] != n:
            raise ValueError(f"assignment length {arr.shape[0]} != {n}")
        targets = arr.astype(np.int64)
    else:
        raise ValueError(f"action must be 1-D or 2-D, got shape {arr.shape}")
    if (targets < 0).any() or (targets >= m).any():
        raise ValueError("assignment targets outside [0, num_dcs)")
    return targets.astype(np.int64)
