"""FIFO experience memory with uniform sampling without replacement."""
from __future__ import annotations

from typing import Iterator, NamedTuple

import numpy as np

from .qnet import Batch

DEFAULT_CAPACITY = 10_000
STATE_SIZE = 420


class Experience(NamedTuple):
    state: np.ndarray       # uint8 (420,)
    action: int
    next_state: np.ndarray  # uint8 (420,)
    reward: float
    terminal: bool


class InsufficientExperienceError(ValueError):
    """Fewer stored experiences than the requested batch size."""


class ReplayBuffer:
    """Ring-buffer backed FIFO queue; pushing at capacity evicts the oldest entry."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY, state_size: int = STATE_SIZE):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_size), dtype=np.uint8)
        self.next_states = np.zeros((capacity, state_size), dtype=np.uint8)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity, dtype=np.float64)
        self.terminals = np.zeros(capacity, dtype=bool)
        self._head = 0  # slot of the oldest entry
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, exp: Experience) -> None:
        if self._size < self.capacity:
            slot = (self._head + self._size) % self.capacity
            self._size += 1
        else:
            slot = self._head
            self._head = (self._head + 1) % self.capacity
        self.states[slot] = exp.state
        self.next_states[slot] = exp.next_state
        self.actions[slot] = exp.action
        self.rewards[slot] = exp.reward
        self.terminals[slot] = exp.terminal

    def _slots(self, positions: np.ndarray) -> np.ndarray:
        return (self._head + positions) % self.capacity

    def _get(self, slot: int) -> Experience:
        return Experience(self.states[slot].copy(), int(self.actions[slot]), self.next_states[slot].copy(),
                          float(self.rewards[slot]), bool(self.terminals[slot]))

    def __getitem__(self, i: int) -> Experience:
        """Entry ``i`` counted from the oldest."""
        if not -self._size <= i < self._size:
            raise IndexError(i)
        return self._get(int(self._slots(np.int64(i % self._size))))

    def __iter__(self) -> Iterator[Experience]:
        for i in range(self._size):
            yield self[i]

    def sample_positions(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Distinct queue positions (0 = oldest) drawn uniformly."""
        if self._size < n:
            raise InsufficientExperienceError(f"buffer holds {self._size} experiences, batch needs {n}")
        return rng.choice(self._size, size=n, replace=False)

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        slots = self._slots(self.sample_positions(n, rng))
        return Batch(self.states[slots], self.actions[slots], self.next_states[slots],
                     self.rewards[slots], self.terminals[slots])

    def sample_experiences(self, n: int, rng: np.random.Generator) -> list[Experience]:
        return [self._get(int(s)) for s in self._slots(self.sample_positions(n, rng))]
