"""Spike encodings of quantile fractions.

A fraction ``tau`` in [0, 1] is represented by ``M`` neurons with Gaussian
tuning curves centred on ``mu_j = j / (M - 1)``.  Each neuron-step is a
Bernoulli draw with probability ``1 - exp(-r_j)``, i.e. the probability that
a Poisson process of rate ``r_j`` fires at least once in a unit step.

Random numbers come from a counter-based hash keyed by
``(seed, key, fraction index, step, neuron)``, so trains are reproducible and
independent of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PopulationCodec",
    "gaussian_rate",
    "encode_population_spikes",
    "spike_probability",
    "cosine_embedding",
    "hash_uniform",
]

_TAU_TOL = 1e-9

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix64(z: np.ndarray) -> np.ndarray:
    # splitmix64 finaliser; uint64 arithmetic wraps
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def hash_uniform(*keys) -> np.ndarray:
    """Uniform [0, 1) variates from a hash of broadcastable integer keys."""
    with np.errstate(over="ignore"):
        h = np.zeros((), dtype=np.uint64)
        for k in keys:
            k = np.asarray(k).astype(np.uint64)
            h = _mix64(h * _GOLDEN + k + _GOLDEN)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


@dataclass(frozen=True)
class PopulationCodec:
    """Gaussian receptive-field population (64 neurons, width 0.05 by default)."""

    m: int = 64
    sigma: float = 0.05
    phi: float | np.ndarray = 1.0
    seed: int = 0
    mu: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("population needs at least 2 neurons")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        phi = np.broadcast_to(np.asarray(self.phi, dtype=float), (self.m,))
        if np.any(phi <= 0) or np.any(phi > 1):
            raise ValueError("peak rates phi must lie in (0, 1]")
        object.__setattr__(self, "mu", np.linspace(0.0, 1.0, self.m))


def _check_tau(tau) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    if np.any(~np.isfinite(tau)) or np.any(tau < -_TAU_TOL) or np.any(tau > 1 + _TAU_TOL):
        bad = tau[~((tau >= -_TAU_TOL) & (tau <= 1 + _TAU_TOL))]
        raise ValueError(f"fractions must lie in [0, 1], got {bad.ravel()[:3]}")
    return np.clip(tau, 0.0, 1.0)


def gaussian_rate(codec: PopulationCodec, tau) -> np.ndarray:
    """Firing rates of every population neuron; shape ``tau.shape + (m,)``."""
    tau = _check_tau(tau)
    d = tau[..., None] - codec.mu
    return np.asarray(codec.phi) * np.exp(-(d * d) / (2.0 * codec.sigma ** 2))


def spike_probability(rate) -> np.ndarray:
    """Per-step spike probability ``1 - exp(-rate)`` (unit step)."""
    return -np.expm1(-np.asarray(rate))


def encode_population_spikes(codec: PopulationCodec, tau, T: int, key: int = 0,
                             dtype=np.float64) -> np.ndarray:
    """Population spike trains ``[T, *tau.shape, m]`` for fractions ``tau``.

    ``key`` separates independent calls (e.g. training steps); the flat index of
    each entry of ``tau`` is also part of the RNG key.
    """
    tau = np.asarray(tau, dtype=float)
    p = spike_probability(gaussian_rate(codec, tau))
    idx = np.arange(tau.size).reshape(tau.shape + (1,))
    steps = np.arange(T).reshape((T,) + (1,) * (tau.ndim + 1))
    neurons = np.arange(codec.m)
    u = hash_uniform(codec.seed, key, idx, steps, neurons)
    return (u < p).astype(dtype)


def cosine_embedding(tau, m: int) -> np.ndarray:
    """``cos(i pi tau)`` for ``i = 0..m-1``; shape ``tau.shape + (m,)``."""
    tau = _check_tau(tau)
    return np.cos(np.arange(m) * np.pi * tau[..., None])
