"""Small tabular environments whose return distributions can be enumerated.

Every environment exposes its full model through :meth:`TabularEnv.transitions`
(``(probability, reward, next_state)`` triples, ``next_state is None`` for
termination) so that oracles can be computed exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["EnvSpec", "TabularEnv", "ChainMDP", "GridWorld", "SyntheticImageGrid", "make_env",
           "env_reset", "env_step"]


@dataclass(frozen=True)
class EnvSpec:
    kind: str = "chain-mdp"
    size: int = 5
    horizon: int = 50
    rewards: tuple = (0.0, 2.0)
    reward_probs: tuple = (0.5, 0.5)
    left_reward: float = 0.0
    step_reward: float = 0.0

    @classmethod
    def from_config(cls, cfg) -> "EnvSpec":
        return cls(cfg.env, cfg.env_size, cfg.env_horizon, tuple(cfg.chain_rewards),
                   tuple(cfg.chain_reward_probs), cfg.chain_left_reward, cfg.chain_step_reward)


class TabularEnv:
    """Finite MDP with a discrete observation per state and a step limit."""

    n_states: int
    n_actions: int
    start_state: int = 0
    obs_shape: tuple

    def __init__(self, horizon: int):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.horizon = horizon
        self.state: int | None = None
        self.t = 0

    def transitions(self, s: int, a: int) -> list[tuple[float, float, int | None]]:
        raise NotImplementedError

    def observe(self, s: int) -> np.ndarray:
        raise NotImplementedError

    def reward_bounds(self) -> tuple[float, float]:
        rs = [r for s in range(self.n_states) for a in range(self.n_actions)
              for _, r, _ in self.transitions(s, a)]
        return min(rs), max(rs)

    def reset(self, rng: np.random.Generator | None = None) -> np.ndarray:
        self.state, self.t = self.start_state, 0
        return self.observe(self.state)

    def step(self, action: int, rng: np.random.Generator):
        """Returns ``(obs, reward, terminal, truncated)``."""
        if self.state is None:
            raise RuntimeError("step() called before reset()")
        if not 0 <= int(action) < self.n_actions:
            raise ValueError(f"invalid action {action}; expected 0..{self.n_actions - 1}")
        outcomes = self.transitions(self.state, int(action))
        probs = np.array([p for p, _, _ in outcomes])
        idx = int(rng.choice(len(outcomes), p=probs)) if len(outcomes) > 1 else 0
        _, reward, nxt = outcomes[idx]
        self.t += 1
        terminal = nxt is None
        if terminal:
            obs = np.zeros(self.obs_shape, dtype=np.float32)
            self.state = None
        else:
            self.state = nxt
            obs = self.observe(nxt)
        truncated = not terminal and self.t >= self.horizon
        if truncated:
            self.state = None
        return obs, float(reward), terminal, truncated


class ChainMDP(TabularEnv):
    """``K`` states in a line, start at the left end; actions 0 = left, 1 = right.

    Moving right from the last state ends the episode with a reward drawn from
    ``rewards``; moving left from the first state ends it with ``left_reward``.
    Every other move pays ``step_reward``.
    """

    n_actions = 2

    def __init__(self, K=5, rewards=(0.0, 2.0), reward_probs=(0.5, 0.5), left_reward=0.0,
                 step_reward=0.0, horizon=50):
        super().__init__(horizon)
        if K < 1:
            raise ValueError("chain needs at least one state")
        if len(rewards) != len(reward_probs) or abs(sum(reward_probs) - 1) > 1e-12:
            raise ValueError("terminal reward probabilities must match rewards and sum to 1")
        self.n_states = K
        self.rewards, self.reward_probs = tuple(rewards), tuple(reward_probs)
        self.left_reward, self.step_reward = left_reward, step_reward
        self.obs_shape = (K,)

    def transitions(self, s, a):
        K = self.n_states
        if a == 1:
            if s == K - 1:
                return [(p, r, None) for r, p in zip(self.rewards, self.reward_probs)]
            return [(1.0, self.step_reward, s + 1)]
        if s == 0:
            return [(1.0, self.left_reward, None)]
        return [(1.0, self.step_reward, s - 1)]

    def observe(self, s):
        obs = np.zeros(self.n_states, dtype=np.float32)
        obs[s] = 1.0
        return obs


class GridWorld(TabularEnv):
    """``n x n`` grid, start top-left, goal bottom-right (reward 1, terminal).

    Actions 0..3 = up, right, down, left; moves into walls leave the agent in place.
    """

    n_actions = 4
    _moves = ((-1, 0), (0, 1), (1, 0), (0, -1))

    def __init__(self, n=4, horizon=50, step_reward=0.0):
        super().__init__(horizon)
        if n < 2:
            raise ValueError("grid side must be >= 2")
        self.n = n
        self.n_states = n * n
        self.goal = n * n - 1
        self.step_reward = step_reward
        self.obs_shape = (n * n,)

    def transitions(self, s, a):
        r, c = divmod(s, self.n)
        dr, dc = self._moves[a]
        r2, c2 = min(max(r + dr, 0), self.n - 1), min(max(c + dc, 0), self.n - 1)
        s2 = r2 * self.n + c2
        if s2 == self.goal:
            return [(1.0, 1.0, None)]
        return [(1.0, self.step_reward, s2)]

    def observe(self, s):
        obs = np.zeros(self.n_states, dtype=np.float32)
        obs[s] = 1.0
        return obs


class SyntheticImageGrid(GridWorld):
    """The grid world rendered as a ``[1, H, W]`` image (agent 1.0, goal 0.5)."""

    def __init__(self, n=4, horizon=50, step_reward=0.0, min_pixels=36):
        super().__init__(n, horizon, step_reward)
        self.cell = -(-min_pixels // n)
        side = self.cell * n
        self.obs_shape = (1, side, side)

    def observe(self, s):
        img = np.zeros(self.obs_shape, dtype=np.float32)
        c = self.cell
        gr, gc = divmod(self.goal, self.n)
        img[0, gr * c:(gr + 1) * c, gc * c:(gc + 1) * c] = 0.5
        r, col = divmod(s, self.n)
        img[0, r * c:(r + 1) * c, col * c:(col + 1) * c] = 1.0
        return img


def make_env(spec: EnvSpec) -> TabularEnv:
    if spec.kind == "chain-mdp":
        return ChainMDP(spec.size, spec.rewards, spec.reward_probs, spec.left_reward,
                        spec.step_reward, spec.horizon)
    if spec.kind == "gridworld":
        return GridWorld(spec.size, spec.horizon, spec.step_reward)
    if spec.kind == "synthetic-image":
        return SyntheticImageGrid(spec.size, spec.horizon, spec.step_reward)
    raise ValueError(f"unknown environment kind {spec.kind!r}")


def env_reset(spec: EnvSpec, seed: int = 0):
    """Build an environment from ``spec`` and reset it; returns ``(env, obs, rng)``."""
    env = make_env(spec)
    rng = np.random.default_rng(seed)
    return env, env.reset(rng), rng


def env_step(env: TabularEnv, action: int, rng: np.random.Generator):
    return env.step(action, rng)
