"""Fixed-capacity FIFO replay buffer with uniform sampling."""

from __future__ import annotations

import numpy as np


class ReplayBuffer:
    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list = []
        self._write = 0

    def append(self, item) -> None:
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._write] = item
            self._write = (self._write + 1) % self.capacity

    def sample(self, rng: np.random.Generator, k: int) -> list:
        if k > len(self._items):
            raise ValueError(f"cannot sample {k} items from buffer of {len(self._items)}")
        idx = rng.integers(0, len(self._items), size=k)
        return [self._items[i] for i in idx]

    def snapshot(self) -> list:
        """Items in insertion order, oldest first."""
        return self._items[self._write:] + self._items[:self._write]

    def __len__(self) -> int:
        return len(self._items)
