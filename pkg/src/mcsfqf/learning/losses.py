"""Quantile Huber loss and distributional TD errors."""

from __future__ import annotations

import numpy as np

__all__ = ["huber_kernel", "huber_quantile_loss", "huber_quantile_loss_grad", "td_errors"]


def huber_kernel(delta, epsilon: float):
    """Huber kernel: ``delta^2 / 2`` inside ``|delta| <= epsilon``, linear outside."""
    a = np.abs(delta)
    return np.where(a <= epsilon, 0.5 * delta * delta, epsilon * (a - 0.5 * epsilon))


def _weights(tau_hat, deltas):
    # |tau - (1 - H(delta))| with H(delta) = 1 only for delta > 0
    tau = np.asarray(tau_hat)[..., None, :]
    return np.abs(tau - (deltas <= 0))


def huber_quantile_loss(tau_hat, deltas, epsilon: float = 1.0) -> float:
    """Mean over batch and target index, sum over predicted quantile index.

    ``deltas[..., i, j] = target_i - prediction_j``; ``tau_hat[..., j]`` is the
    fraction of prediction ``j``.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    deltas = np.asarray(deltas, dtype=np.float64)
    rho = _weights(tau_hat, deltas) * huber_kernel(deltas, epsilon) / epsilon
    per_sample = rho.mean(axis=-2).sum(axis=-1)
    return float(np.mean(per_sample))


def huber_quantile_loss_grad(tau_hat, deltas, epsilon: float = 1.0) -> np.ndarray:
    """Gradient of :func:`huber_quantile_loss` w.r.t. the predictions ``[..., N]``."""
    deltas = np.asarray(deltas, dtype=np.float64)
    psi = np.clip(deltas, -epsilon, epsilon)
    d_rho = _weights(tau_hat, deltas) * psi / epsilon
    n_batch = int(np.prod(deltas.shape[:-2])) if deltas.ndim > 2 else 1
    # d delta_ij / d pred_j = -1
    return -d_rho.sum(axis=-2) / (deltas.shape[-2] * n_batch)


def td_errors(rewards, next_quantiles, cur_quantiles, gamma: float = 0.99, terminal=None):
    """``delta[..., i, j] = r + gamma * next_i - cur_j``; terminal rows drop the bootstrap."""
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    r = np.asarray(rewards, dtype=np.float64)
    nxt = np.asarray(next_quantiles, dtype=np.float64)
    cur = np.asarray(cur_quantiles, dtype=np.float64)
    boot = gamma if terminal is None else gamma * (1.0 - np.asarray(terminal, dtype=np.float64))
    target = r[..., None] + np.asarray(boot)[..., None] * nxt
    return target[..., :, None] - cur[..., None, :]
