"""Uniform ring-buffer experience replay and epsilon-greedy exploration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Transition", "ReplayBuffer", "replay_push", "replay_sample", "epsilon_greedy",
           "linear_epsilon"]


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


class ReplayBuffer:
    def __init__(self, capacity: int, obs_shape: tuple, dtype=np.float32):
        if capacity < 1:
            raise ValueError("replay capacity must be positive")
        self.capacity = capacity
        self.obs = np.zeros((capacity,) + tuple(obs_shape), dtype)
        self.next_obs = np.zeros_like(self.obs)
        self.actions = np.zeros(capacity, np.int64)
        self.rewards = np.zeros(capacity, np.float64)
        self.terminal = np.zeros(capacity, bool)
        self.size = 0
        self.pos = 0

    def __len__(self):
        return self.size

    def push(self, tr: Transition):
        i = self.pos
        self.obs[i], self.next_obs[i] = tr.state, tr.next_state
        self.actions[i], self.rewards[i], self.terminal[i] = tr.action, tr.reward, tr.terminal
        self.pos = (self.pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch: int, rng: np.random.Generator) -> dict:
        """Uniform sample with replacement."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        idx = rng.integers(self.size, size=batch)
        return {"obs": self.obs[idx], "actions": self.actions[idx], "rewards": self.rewards[idx],
                "next_obs": self.next_obs[idx], "terminal": self.terminal[idx], "index": idx}

    def transitions(self):
        """Stored transitions, oldest first."""
        start = self.pos if self.size == self.capacity else 0
        for k in range(self.size):
            i = (start + k) % self.capacity
            yield Transition(self.obs[i], int(self.actions[i]), float(self.rewards[i]),
                             self.next_obs[i], bool(self.terminal[i]))


def replay_push(buffer: ReplayBuffer, transition: Transition):
    buffer.push(transition)


def replay_sample(buffer: ReplayBuffer, batch: int, seed) -> dict:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return buffer.sample(batch, rng)


def epsilon_greedy(q, epsilon: float, rng: np.random.Generator) -> int:
    """Uniform random action with probability ``epsilon``, else argmax (lowest index on ties)."""
    if not 0 <= epsilon <= 1:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    q = np.asarray(q)
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(q.shape[-1]))
    return int(np.argmax(q))


def linear_epsilon(step: int, total: int, start: float, end: float, fraction: float) -> float:
    span = max(1, int(total * fraction))
    return float(end + (start - end) * max(0.0, 1.0 - step / span))
