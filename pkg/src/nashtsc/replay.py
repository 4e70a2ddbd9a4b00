"""Bounded FIFO experience memory."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

ABSENT = -1


class NotEnoughSamples(RuntimeError):
    pass


@dataclass
class Experience:
    state: np.ndarray
    own_action: int
    # one slot per neighbor position (N, S, E, W); ABSENT at the grid boundary
    neighbor_actions: tuple
    reward: float
    next_state: np.ndarray
    # next observations of every agent on the grid, shared by all agents'
    # experiences from the same epoch; needed to replay the joint game
    joint_next_states: np.ndarray | None = None


class ReplayBuffer:
    def __init__(self, capacity: int = 20000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.entries: deque = deque(maxlen=capacity)

    def __len__(self):
        return len(self.entries)

    def push(self, e: Experience):
        self.entries.append(e)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Experience]:
        """Uniform draw with replacement."""
        if len(self.entries) < batch_size:
            raise NotEnoughSamples(f"buffer holds {len(self.entries)} experiences, {batch_size} requested")
        idx = rng.integers(0, len(self.entries), size=batch_size)
        return [self.entries[i] for i in idx]
