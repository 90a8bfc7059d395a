"""Agent, training iteration and greedy evaluation."""

from __future__ import annotations

import copy
import math

import numpy as np

from ..config import RunConfig
from ..network import EncoderSpec, FractionSet, NetworkConfig, full_forward, init_params, quantiles_at
from ..learning import (adam, adam_step, fraction_weight_grad, huber_quantile_loss,
                        huber_quantile_loss_grad, rmsprop, rmsprop_step, stbp_backward, td_errors,
                        wasserstein_grad_tau)
from .envs import EnvSpec, TabularEnv, make_env
from .replay import ReplayBuffer, Transition, epsilon_greedy, linear_epsilon

__all__ = ["DivergenceError", "Agent", "TrainState", "network_config", "train_iteration", "train",
           "evaluate", "compare_to_oracle", "ACT_KEY_OFFSET"]

ACT_KEY_OFFSET = 1 << 40


class DivergenceError(RuntimeError):
    pass


def network_config(cfg: RunConfig, env: TabularEnv) -> NetworkConfig:
    enc = EncoderSpec(cfg.encoder, hidden=tuple(cfg.encoder_hidden)) if cfg.encoder == "dense" \
        else EncoderSpec("conv")
    return NetworkConfig(obs_shape=tuple(env.obs_shape), n_actions=env.n_actions, encoder=enc,
                         neuron=cfg.neuron_params(), T=cfg.T, N=cfg.N, M=cfg.M, C=cfg.C,
                         n_mcn=cfg.n_mcn, n_hidden=cfg.n_hidden, fusion=cfg.fusion,
                         surrogate_center=cfg.surrogate_center, smooth=cfg.smooth_spikes,
                         codec_seed=cfg.seed, init_gain=cfg.init_gain)


def _interval_wasserstein(tau, f_tau, f_hat) -> np.ndarray:
    # piecewise-linear estimate of sum_i int |F - F(tau_hat_i)| from values at tau and tau_hat
    a, b = tau[:, :-1], tau[:, 1:]
    c = 0.5 * (a + b)
    left = 0.5 * (c - a) * np.abs(f_hat - f_tau[:, :-1])
    right = 0.5 * (b - c) * np.abs(f_tau[:, 1:] - f_hat)
    return (left + right).sum(axis=1)


class Agent:
    """Online and target networks plus the two optimisers."""

    def __init__(self, net: NetworkConfig, cfg: RunConfig, rng: np.random.Generator):
        self.net, self.cfg = net, cfg
        self.params = init_params(net, rng)
        self.target = copy.deepcopy(self.params)
        self.adam = adam(cfg.lr_adam)
        self.rms = rmsprop(cfg.lr_rmsprop)
        self.updates = 0

    def q(self, obs, key: int) -> np.ndarray:
        _, est, _ = full_forward(np.asarray(obs)[None], self.params, self.net, key=key, record=False)
        return est.q[0]

    def act(self, obs, epsilon: float, rng: np.random.Generator, key: int) -> int:
        if epsilon >= 1.0:
            return int(rng.integers(self.net.n_actions))
        if epsilon > 0 and rng.random() < epsilon:
            return int(rng.integers(self.net.n_actions))
        return epsilon_greedy(self.q(obs, key), 0.0, rng)

    def update(self, batch: dict) -> dict:
        cfg, net = self.cfg, self.net
        key = 3 * self.updates
        B = len(batch["actions"])
        rows, acts = np.arange(B), batch["actions"]

        fractions, est, tape = full_forward(batch["obs"], self.params, net, key=key)
        _, tgt, _ = full_forward(batch["next_obs"], self.target, net, key=key + 1,
                                 fractions=fractions, record=False)
        next_a = np.argmax(tgt.q, axis=1)
        next_quant = tgt.values[rows, :, next_a]
        cur = est.values[rows, :, acts]
        deltas = td_errors(batch["rewards"], next_quant, cur, cfg.gamma, batch["terminal"])
        loss = huber_quantile_loss(fractions.tau_hat, deltas, cfg.huber_epsilon)
        if not math.isfinite(loss):
            raise DivergenceError(f"non-finite quantile loss at update {self.updates}")
        d_values = np.zeros(est.values.shape)
        d_values[rows, :, acts] = huber_quantile_loss_grad(fractions.tau_hat, deltas, cfg.huber_epsilon)
        grads = stbp_backward(tape, self.params, d_values)

        # fraction proposal: quantile values at every tau_i of the taken action
        O_s = tape.layers["O_s"]
        f_tau = quantiles_at(O_s, fractions.tau, self.params, net, key=key + 2)[rows, :, acts]
        g_tau = wasserstein_grad_tau(f_tau[:, 1:-1], cur)
        g_f = fraction_weight_grad(g_tau, fractions.p, O_s, mode=cfg.fraction_grad)
        wl = float(_interval_wasserstein(fractions.tau, f_tau, cur).mean())

        names = [k for k in self.params if k != "w_f"]
        adam_step(self.adam, self.params, grads, names)
        rmsprop_step(self.rms, self.params, {"w_f": g_f})
        for k, v in self.params.items():
            if not np.all(np.isfinite(v)):
                raise DivergenceError(f"non-finite weights in {k!r} at update {self.updates}")
        self.updates += 1
        if self.updates % cfg.target_sync == 0:
            self.sync_target()
        return {"loss_huber": loss, "loss_wasserstein": wl,
                "fraction_entropy": float(fractions.entropy().mean())}

    def sync_target(self):
        self.target = copy.deepcopy(self.params)

    def quantiles(self, obs, key: int = 0, fractions: FractionSet | None = None):
        """``(FractionSet, values [N, A], q [A])`` for one observation."""
        f, est, _ = full_forward(np.asarray(obs)[None], self.params, self.net, key=key,
                                 fractions=fractions, record=False)
        return f, est.values[0], est.q[0]


class TrainState:
    """Everything a run carries between iterations."""

    def __init__(self, cfg: RunConfig, env_spec: EnvSpec | None = None):
        self.cfg = cfg
        self.env = make_env(env_spec or EnvSpec.from_config(cfg))
        self.rng = np.random.default_rng(cfg.seed)
        self.net = network_config(cfg, self.env)
        self.agent = Agent(self.net, cfg, self.rng)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, self.env.obs_shape)
        self.step = 0
        self.episode = 0
        self.episode_return = 0.0
        self.discount = 1.0
        self.obs = self.env.reset(self.rng)


def train_iteration(state: TrainState) -> dict:
    """One environment step and (after warm-up) one gradient step."""
    cfg, env, agent = state.cfg, state.env, state.agent
    eps = linear_epsilon(state.step, cfg.steps, cfg.eps_start, cfg.eps_end, cfg.eps_fraction)
    a = agent.act(state.obs, eps, state.rng, ACT_KEY_OFFSET + state.step)
    nxt, r, terminal, truncated = env.step(a, state.rng)
    state.buffer.push(Transition(state.obs, a, r, nxt, terminal))
    state.episode_return += r
    rec = {"step": state.step, "episode": state.episode, "return": None, "loss_huber": None,
           "loss_wasserstein": None, "epsilon": eps, "fraction_entropy": None}
    if len(state.buffer) >= max(cfg.warmup, 1):
        rec.update(agent.update(state.buffer.sample(cfg.batch_size, state.rng)))
    if terminal or truncated:
        rec["return"] = state.episode_return
        state.episode += 1
        state.episode_return = 0.0
        state.obs = env.reset(state.rng)
    else:
        state.obs = nxt
    state.step += 1
    return rec


def train(cfg: RunConfig, on_record=None, env_spec: EnvSpec | None = None, state: TrainState | None = None):
    """Run ``cfg.steps - state.step`` iterations; returns the final :class:`TrainState`."""
    state = state or TrainState(cfg, env_spec)
    while state.step < cfg.steps:
        rec = train_iteration(state)
        if on_record is not None:
            on_record(state, rec)
    return state


def evaluate(agent: Agent, env: TabularEnv, episodes: int, seed: int, epsilon: float = 0.0) -> dict:
    """Greedy episodes; mean score, standard deviation and the std as a percentage of the score."""
    rng = np.random.default_rng(seed)
    returns = []
    for ep in range(episodes):
        obs, total, t = env.reset(rng), 0.0, 0
        while True:
            a = agent.act(obs, epsilon, rng, ACT_KEY_OFFSET * 2 + ep * 10_000 + t)
            obs, r, terminal, truncated = env.step(a, rng)
            total += r
            t += 1
            if terminal or truncated:
                break
        returns.append(total)
    score = float(np.mean(returns))
    std = float(np.std(returns))
    pct = 100.0 * std / abs(score) if score != 0 else (0.0 if std == 0 else float("inf"))
    return {"score": score, "std": std, "std_pct": pct, "episodes": episodes, "returns": returns}


def compare_to_oracle(agent: Agent, env: TabularEnv, gamma: float, state: int | None = None,
                      key: int = 0) -> dict:
    """Greedy policy, Q and quantile set of ``agent`` against the exact DP / enumeration oracles.

    ``policy_match`` covers every state; ``q_error`` and ``w1`` are measured at
    ``state`` (the start state by default) for the agent's greedy action.
    """
    from .oracle import brute_force_return_distribution, optimal_policy, q_value_iteration, wasserstein1

    state = env.start_state if state is None else state
    q_star = q_value_iteration(env, gamma)
    pi_star = optimal_policy(env, gamma)
    greedy = np.array([int(np.argmax(agent.q(env.observe(s), key))) for s in range(env.n_states)])
    fr, values, q = agent.quantiles(env.observe(state), key=key)
    a = int(np.argmax(q))
    dist = brute_force_return_distribution(env, pi_star, state, a, gamma)
    w1 = wasserstein1(values[:, a], fr.widths[0], dist.values, dist.probs)
    return {"policy_match": bool(np.array_equal(greedy, pi_star)), "greedy": greedy.tolist(),
            "optimal": pi_star.tolist(), "action": a, "q": float(q[a]), "q_oracle": float(q_star[state, a]),
            "q_error": float(abs(q[a] - q_star[state, a])), "w1": float(w1)}
