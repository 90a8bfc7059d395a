"""Gradients of the fraction-proposal (Wasserstein) objective."""

from __future__ import annotations

import numpy as np

__all__ = ["wasserstein_grad_tau", "paper_delta", "fraction_jacobian", "fraction_weight_grad", "FRACTION_GRAD_MODES"]

FRACTION_GRAD_MODES = ("paper", "softmax-chain")


def wasserstein_grad_tau(f_tau, f_hat) -> np.ndarray:
    """``dW1/dtau_i = 2 F(tau_i) - F(tau_hat_i) - F(tau_hat_{i-1})`` for interior ``i``.

    ``f_tau [..., N-1]`` holds the quantile values at ``tau_1..tau_{N-1}`` and
    ``f_hat [..., N]`` the values at the midpoints.
    """
    f_tau = np.asarray(f_tau, dtype=np.float64)
    f_hat = np.asarray(f_hat, dtype=np.float64)
    if f_tau.shape[-1] != f_hat.shape[-1] - 1:
        raise ValueError(f"need N-1 interior values for N midpoints, got {f_tau.shape} and {f_hat.shape}")
    return 2.0 * f_tau - f_hat[..., 1:] - f_hat[..., :-1]


def paper_delta(p) -> np.ndarray:
    """Published factor ``Delta[..., i, k] = -p_k p_i + (N - i + 1) p_i (1 - p_i)``, 0-based ``i``."""
    p = np.asarray(p, dtype=np.float64)
    N = p.shape[-1]
    i = np.arange(N)[:, None]
    p_i, p_k = p[..., :, None], p[..., None, :]
    return -p_k * p_i + (N - i + 1) * p_i * (1.0 - p_i)


def fraction_jacobian(p, mode: str = "softmax-chain") -> np.ndarray:
    """``d tau_n / d logit_i`` for interior ``n = 1..N-1``; shape ``[..., N-1, N]``.

    ``softmax-chain`` is the exact cumulative-softmax Jacobian
    ``sum_{k<n} p_k (1[k=i] - p_i)``.  ``paper`` sums the published factor
    ``Delta_{i,k} = -p_k p_i + (N - i + 1) p_i (1 - p_i)`` over ``k < n``.
    """
    p = np.asarray(p, dtype=np.float64)
    N = p.shape[-1]
    n = np.arange(1, N)[:, None]  # interior fraction index
    i = np.arange(N)[None, :]
    tau_n = np.cumsum(p, axis=-1)[..., :-1][..., :, None]  # sum_{k<n} p_k
    p_i = p[..., None, :]
    if mode == "softmax-chain":
        return (i < n) * p_i - tau_n * p_i
    if mode == "paper":
        return -p_i * tau_n + n * (N - i + 1) * p_i * (1.0 - p_i)
    raise ValueError(f"fraction gradient mode must be one of {FRACTION_GRAD_MODES}, got {mode!r}")


def fraction_weight_grad(wl_grads, p, O_s, mode: str = "paper") -> np.ndarray:
    """Gradient of the Wasserstein objective w.r.t. ``W_f [N, E]``.

    ``wl_grads [B, N-1]`` from :func:`wasserstein_grad_tau`, ``p [B, N]``,
    ``O_s [T, B, E]`` (state spikes; the logits use their time average).
    Averaged over the batch.
    """
    wl_grads = np.atleast_2d(np.asarray(wl_grads, dtype=np.float64))
    p = np.atleast_2d(p)
    J = fraction_jacobian(p, mode)  # [B, N-1, N]
    d_logits = np.einsum("bn,bni->bi", wl_grads, J)
    feat = np.asarray(O_s, dtype=np.float64).mean(axis=0).reshape(p.shape[0], -1)
    return d_logits.T @ feat / p.shape[0]
