"""Exact value and return-distribution oracles for tabular environments."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .envs import TabularEnv

__all__ = ["ReturnDistribution", "brute_force_return_distribution", "q_value_iteration",
           "policy_q_values", "optimal_policy", "wasserstein1", "quantile_atoms"]

_ROUND = 12


@dataclass(frozen=True)
class ReturnDistribution:
    """Discrete distribution of the discounted return; ``values`` sorted ascending."""

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        if abs(float(np.sum(self.probs)) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {np.sum(self.probs)!r}, not 1")
        if np.any(np.diff(self.values) < 0):
            raise ValueError("atom values must be sorted")

    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))

    def quantile(self, tau) -> np.ndarray:
        """Left-continuous inverse CDF ``inf{z : F(z) >= tau}``."""
        cdf = np.cumsum(self.probs)
        idx = np.searchsorted(cdf, np.asarray(tau) - 1e-12, side="left")
        return self.values[np.minimum(idx, len(self.values) - 1)]


def _as_policy(policy, env: TabularEnv) -> np.ndarray:
    pol = np.asarray(policy, dtype=float)
    if pol.ndim == 1:
        out = np.zeros((env.n_states, env.n_actions))
        out[np.arange(env.n_states), pol.astype(int)] = 1.0
        return out
    if pol.shape != (env.n_states, env.n_actions):
        raise ValueError(f"policy shape {pol.shape} does not match ({env.n_states}, {env.n_actions})")
    return pol


def brute_force_return_distribution(env: TabularEnv, policy, state: int, action: int, gamma: float,
                                    horizon: int | None = None, max_states: int = 10_000) -> ReturnDistribution:
    """Exact distribution of ``sum_t gamma^t r_t`` after taking ``action`` in ``state``.

    Enumerates every outcome of the model, following ``policy`` (actions per
    state, or ``[S, A]`` probabilities) for at most ``horizon`` steps in total;
    atoms with equal values (to 1e-12) are merged.
    """
    if env.n_states > max_states:
        raise ValueError(f"state space of {env.n_states} exceeds the oracle bound {max_states}")
    pol = _as_policy(policy, env)
    horizon = env.horizon if horizon is None else horizon

    @lru_cache(maxsize=None)
    def from_state(s: int, steps_left: int) -> tuple:
        if steps_left == 0:
            return ((0.0, 1.0),)
        acc: dict[float, float] = {}
        for a in range(env.n_actions):
            if pol[s, a] > 0:
                for v, p in from_action(s, a, steps_left):
                    acc[v] = acc.get(v, 0.0) + pol[s, a] * p
        return tuple(acc.items())

    @lru_cache(maxsize=None)
    def from_action(s: int, a: int, steps_left: int) -> tuple:
        acc: dict[float, float] = {}
        for p, r, nxt in env.transitions(s, a):
            tail = ((0.0, 1.0),) if nxt is None else from_state(nxt, steps_left - 1)
            for v, q in tail:
                key = round(r + gamma * v, _ROUND)
                acc[key] = acc.get(key, 0.0) + p * q
        return tuple(acc.items())

    atoms = sorted(from_action(state, action, horizon))
    values = np.array([v for v, _ in atoms])
    probs = np.array([p for _, p in atoms])
    probs = probs / probs.sum()
    return ReturnDistribution(values, probs)


def q_value_iteration(env: TabularEnv, gamma: float, tol: float = 1e-14, max_iter: int = 100_000) -> np.ndarray:
    """Optimal action values of the infinite-horizon MDP."""
    Q = np.zeros((env.n_states, env.n_actions))
    model = [[env.transitions(s, a) for a in range(env.n_actions)] for s in range(env.n_states)]
    for _ in range(max_iter):
        V = Q.max(axis=1)
        new = np.array([[sum(p * (r + (0.0 if n is None else gamma * V[n])) for p, r, n in model[s][a])
                         for a in range(env.n_actions)] for s in range(env.n_states)])
        if np.abs(new - Q).max() <= tol:
            return new
        Q = new
    return Q


def policy_q_values(env: TabularEnv, policy, gamma: float, horizon: int | None = None) -> np.ndarray:
    """Finite-horizon action values of ``policy`` by backward induction."""
    pol = _as_policy(policy, env)
    horizon = env.horizon if horizon is None else horizon
    V = np.zeros(env.n_states)
    Q = np.zeros((env.n_states, env.n_actions))
    for _ in range(horizon):
        Q = np.array([[sum(p * (r + (0.0 if n is None else gamma * V[n])) for p, r, n in env.transitions(s, a))
                       for a in range(env.n_actions)] for s in range(env.n_states)])
        V = (pol * Q).sum(axis=1)
    return Q


def optimal_policy(env: TabularEnv, gamma: float) -> np.ndarray:
    """Greedy actions of the optimal values, lowest index on ties."""
    return np.argmax(q_value_iteration(env, gamma), axis=1)


def quantile_atoms(tau, values) -> tuple[np.ndarray, np.ndarray]:
    """Atoms of the quantile set: ``values[i]`` weighted by ``tau[i+1] - tau[i]``, sorted."""
    values = np.asarray(values, dtype=float)
    w = np.diff(np.asarray(tau, dtype=float))
    order = np.argsort(values, kind="stable")
    return values[order], w[order]


def wasserstein1(u_values, u_weights, v_values, v_weights) -> float:
    """1-Wasserstein distance between two weighted atom sets (integral of |CDF_u - CDF_v|)."""
    u_values, v_values = np.asarray(u_values, float), np.asarray(v_values, float)
    u_w = np.asarray(u_weights, float) / np.sum(u_weights)
    v_w = np.asarray(v_weights, float) / np.sum(v_weights)
    grid = np.unique(np.concatenate([u_values, v_values]))
    cdf_u = np.array([u_w[u_values <= x].sum() for x in grid[:-1]])
    cdf_v = np.array([v_w[v_values <= x].sum() for x in grid[:-1]])
    return float(np.sum(np.abs(cdf_u - cdf_v) * np.diff(grid)))
