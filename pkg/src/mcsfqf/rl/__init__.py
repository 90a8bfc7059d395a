"""Desk-scale environments, oracles, replay and the training loop."""

from .envs import ChainMDP, EnvSpec, GridWorld, SyntheticImageGrid, TabularEnv, env_reset, env_step, make_env
from .oracle import (ReturnDistribution, brute_force_return_distribution, optimal_policy, policy_q_values,
                     q_value_iteration, quantile_atoms, wasserstein1)
from .replay import ReplayBuffer, Transition, epsilon_greedy, linear_epsilon, replay_push, replay_sample
from .agent import (ACT_KEY_OFFSET, Agent, DivergenceError, TrainState, compare_to_oracle, evaluate,
                    network_config, train,
                    train_iteration)

__all__ = [
    "ChainMDP", "EnvSpec", "GridWorld", "SyntheticImageGrid", "TabularEnv", "env_reset", "env_step", "make_env",
    "ReturnDistribution", "brute_force_return_distribution", "optimal_policy", "policy_q_values",
    "q_value_iteration", "quantile_atoms", "wasserstein1",
    "ReplayBuffer", "Transition", "epsilon_greedy", "linear_epsilon", "replay_push", "replay_sample",
    "ACT_KEY_OFFSET", "Agent", "DivergenceError", "TrainState", "compare_to_oracle", "evaluate", "network_config", "train",
    "train_iteration",
]
