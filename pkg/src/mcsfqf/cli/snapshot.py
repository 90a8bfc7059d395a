"""Conversion between a training run and checkpoint tensors + metadata."""

from __future__ import annotations

import numpy as np

from ..config import ConfigError, parse_config
from ..learning import OptimizerState
from ..rl import Agent, EnvSpec, make_env, network_config
from .checkpoint import VERSION, CheckpointError

__all__ = ["snapshot", "restore"]

_OPT_FIELDS = ("kind", "lr", "beta1", "beta2", "alpha", "eps", "step")


def _opt_meta(opt: OptimizerState) -> dict:
    return {k: getattr(opt, k) for k in _OPT_FIELDS}


def snapshot(state) -> tuple[dict, dict]:
    """``(tensors, meta)`` for a :class:`~mcsfqf.rl.TrainState`."""
    agent = state.agent
    tensors = {}
    for k, v in agent.params.items():
        tensors[f"online/{k}"] = v
    for k, v in agent.target.items():
        tensors[f"target/{k}"] = v
    for prefix, opt in (("adam", agent.adam), ("rmsprop", agent.rms)):
        for k, v in opt.m.items():
            tensors[f"{prefix}/m/{k}"] = v
        for k, v in opt.v.items():
            tensors[f"{prefix}/v/{k}"] = v
    meta = {"format_version": VERSION, "step": state.step, "episode": state.episode,
            "updates": agent.updates, "rng": state.rng.bit_generator.state,
            "adam": _opt_meta(agent.adam), "rmsprop": _opt_meta(agent.rms),
            "config": state.cfg.dumps()}
    return tensors, meta


def restore(tensors: dict, meta: dict):
    """Rebuild ``(cfg, agent, env, rng, step)`` from a loaded checkpoint."""
    try:
        cfg = parse_config(meta["config"])
    except KeyError:
        raise CheckpointError("checkpoint metadata lacks the run config") from None
    except ConfigError as e:
        raise CheckpointError(f"checkpoint config is invalid: {e}") from None
    env = make_env(EnvSpec.from_config(cfg))
    rng = np.random.default_rng(cfg.seed)
    agent = Agent(network_config(cfg, env), cfg, rng)
    for group, params in (("online", agent.params), ("target", agent.target)):
        for k in params:
            name = f"{group}/{k}"
            if name not in tensors:
                raise CheckpointError(f"checkpoint lacks tensor {name!r}")
            if tensors[name].shape != params[k].shape:
                raise CheckpointError(f"tensor {name!r} has shape {tensors[name].shape}, "
                                      f"config expects {params[k].shape}")
            params[k] = tensors[name].copy()
    for prefix, opt in (("adam", agent.adam), ("rmsprop", agent.rms)):
        for k, v in meta.get(prefix, {}).items():
            setattr(opt, k, v)
        for name, v in tensors.items():
            parts = name.split("/")
            if parts[0] == prefix:
                getattr(opt, parts[1])[parts[2]] = v.copy()
    agent.updates = int(meta.get("updates", 0))
    rng.bit_generator.state = meta["rng"]
    return cfg, agent, env, rng, int(meta.get("step", 0))
