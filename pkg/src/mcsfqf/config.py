"""Run configuration: flat ``key = value`` files with ``#`` comments."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .neuron import NeuronParams

__all__ = ["RunConfig", "ConfigError", "load_config", "parse_config", "MODES"]

# CLI mode name -> fusion path
MODES = {"mcs-fqf": "mcn+population", "s-fqf-pop": "li+population", "s-fqf": "li+cosine"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # neuron / network constants (defaults from the published parameter table)
    tau_L: float = 2.0
    tau_A: float = 2.0
    tau_B: float = 2.0
    g_A: float = 1.0
    g_B: float = 1.0
    g_L: float = 1.0
    v_th: float = 1.0
    v_reset: float = 0.0
    T: int = 8
    N: int = 32
    M: int = 64
    C: float = 0.05
    lr_adam: float = 1.0e-4
    lr_rmsprop: float = 2.5e-9
    # architecture
    mode: str = "mcs-fqf"
    encoder: str = "dense"
    encoder_hidden: tuple = (64, 64)
    n_mcn: int = 512
    n_hidden: int = 512
    init_gain: float = 3.0
    surrogate_center: str = "threshold"
    smooth_spikes: bool = False
    fraction_grad: str = "paper"
    # learning
    gamma: float = 0.99
    huber_epsilon: float = 1.0
    batch_size: int = 32
    buffer_capacity: int = 100_000
    warmup: int = 1000
    target_sync: int = 1000
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.1
    # environment
    env: str = "chain-mdp"
    env_size: int = 5
    env_horizon: int = 50
    chain_rewards: tuple = (0.0, 2.0)
    chain_reward_probs: tuple = (0.5, 0.5)
    chain_left_reward: float = 0.0
    chain_step_reward: float = 0.0
    # run control
    seed: int = 0
    seeds: tuple = ()
    steps: int = 50_000
    checkpoint_every: int = 10_000
    log_every: int = 1
    eval_episodes: int = 10
    out: str = "runs/default"
    fault_injection: str = "none"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode: expected one of {sorted(MODES)}, got {self.mode!r}")
        if self.fraction_grad not in ("paper", "softmax-chain"):
            raise ConfigError(f"fraction_grad: expected 'paper' or 'softmax-chain', got {self.fraction_grad!r}")
        if self.surrogate_center not in ("threshold", "zero"):
            raise ConfigError(f"surrogate_center: expected 'threshold' or 'zero', got {self.surrogate_center!r}")
        if self.fault_injection not in ("none", "leak"):
            raise ConfigError(f"fault_injection: expected 'none' or 'leak', got {self.fault_injection!r}")
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"gamma: must lie in (0, 1], got {self.gamma}")
        if not self.huber_epsilon > 0:
            raise ConfigError(f"huber_epsilon: must be positive, got {self.huber_epsilon}")
        try:
            self.neuron_params()
        except ValueError as e:
            raise ConfigError(str(e)) from None

    @property
    def fusion(self) -> str:
        return MODES[self.mode]

    def neuron_params(self) -> NeuronParams:
        return NeuronParams(self.tau_L, self.tau_A, self.tau_B, self.g_A, self.g_B, self.g_L,
                            self.v_th, self.v_reset)

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v)
                for f in fields(self)}

    def dumps(self) -> str:
        lines = []
        for k, v in self.to_dict().items():
            if isinstance(v, list):
                v = ",".join(_fmt(x) for x in v)
            lines.append(f"{k} = {_fmt(v) if not isinstance(v, str) else v}")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _convert(key: str, raw: str):
    default = _FIELDS[key].default
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            if raw.lstrip("+-").isdigit():
                return int(raw)
            f = float(raw)  # allow 5e4
            if not f.is_integer():
                raise ValueError(raw)
            return int(f)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            if not raw:
                return ()
            elem = type(default[0]) if default else int
            return tuple(elem(x.strip()) for x in raw.split(","))
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse value {raw!r}") from None


def parse_config(text: str, overrides: dict | None = None, base: RunConfig | None = None) -> RunConfig:
    """Parse ``key = value`` lines; unknown keys raise :class:`ConfigError` naming the key."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        values[key] = raw
    values.update(overrides or {})
    for key in values:
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
    kw = {k: _convert(k, v) if isinstance(v, str) else v for k, v in values.items()}
    return dataclasses.replace(base or RunConfig(), **kw)


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    if path is None:
        return parse_config("", overrides)
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), overrides)
