"""Finite-difference verification of every analytic gradient path."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.polynomial import Polynomial

from ..network import EncoderSpec, NetworkConfig, full_forward, init_params, zero_params
from .fractions import fraction_weight_grad, wasserstein_grad_tau
from .losses import huber_quantile_loss, huber_quantile_loss_grad
from .stbp import paper_dendrite_grads, stbp_backward

__all__ = ["GradCheckConfig", "small_network_config", "verify_gradients", "relative_error",
           "central_difference", "wasserstein_loss"]


@dataclass(frozen=True)
class GradCheckConfig:
    fusion: str = "mcn+population"
    encoder: str = "dense"
    smooth: bool = True
    zero_weights: bool = False
    batch: int = 2
    N: int = 4
    T: int = 8
    step: float = 1e-4
    threshold: float = 1e-4
    epsilon: float = 1.0
    seed: int = 0


def small_network_config(fusion="mcn+population", encoder="dense", smooth=True, N=4, T=8) -> NetworkConfig:
    """Network with at most 64 units per layer, for gradient checks."""
    if encoder == "conv":
        enc = EncoderSpec("conv", channels=(4, 6, 8), kernels=(8, 4, 3), strides=(4, 2, 1))
        obs_shape = (1, 36, 36)
    else:
        enc = EncoderSpec("dense", hidden=(16, 12))
        obs_shape = (6,)
    return NetworkConfig(obs_shape=obs_shape, n_actions=3, encoder=enc, T=T, N=N, M=16, C=0.1,
                         n_mcn=24, n_hidden=16, fusion=fusion, smooth=smooth, init_gain=2.0)


def relative_error(analytic, numeric) -> float:
    """``max|a - f| / max|f|`` over a parameter group (0 when both vanish)."""
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    scale = max(np.abs(numeric).max(initial=0.0), np.abs(analytic).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / max(np.abs(numeric).max(initial=0.0), 1e-300))


def central_difference(f, x: np.ndarray, h: float) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. every entry of ``x`` (mutated and restored)."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat, g = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        g[i] = (fp - fm) / (2 * h)
    return grad


def wasserstein_loss(tau, quantile_fn: Polynomial) -> np.ndarray:
    """Exact 1-Wasserstein objective for a monotone polynomial quantile function.

    ``sum_i int_{tau_i}^{tau_{i+1}} |F(t) - F(tau_hat_i)| dt`` per row of ``tau``.
    """
    tau = np.asarray(tau, dtype=np.float64)
    a, b = tau[..., :-1], tau[..., 1:]
    c = 0.5 * (a + b)
    G = quantile_fn.integ()
    Fc = quantile_fn(c)
    left = Fc * (c - a) - (G(c) - G(a))
    right = (G(b) - G(c)) - Fc * (b - c)
    return (left + right).sum(axis=-1)


def _record(name, analytic, numeric, threshold, asserted=True):
    err = relative_error(analytic, numeric)
    return {"name": name, "max_rel_err": err, "threshold": threshold,
            "passed": bool(err < threshold) if asserted else True, "asserted": asserted}


def verify_gradients(cfg: GradCheckConfig = GradCheckConfig()) -> list[dict]:
    """Compare analytic gradients with central differences on a small network.

    Returns one record per parameter group.  Records with ``asserted=False``
    (the published closed forms) are informational and always pass.
    """
    net = small_network_config(cfg.fusion, cfg.encoder, cfg.smooth, cfg.N, cfg.T)
    rng = np.random.default_rng(cfg.seed)
    params = zero_params(net, np.float64) if cfg.zero_weights else init_params(net, rng, np.float64)
    params["w_f"] = rng.normal(0, 1.0, params["w_f"].shape)
    obs = (rng.random((cfg.batch,) + net.obs_shape) < 0.5).astype(np.float64)
    actions = rng.integers(net.n_actions, size=cfg.batch)
    targets = rng.normal(0.0, 1.0, (cfg.batch, cfg.N))
    key = 7
    rows = np.arange(cfg.batch)

    fractions, est, tape = full_forward(obs, params, net, key=key)

    def huber(values):
        pred = values[rows, :, actions]
        deltas = targets[:, :, None] - pred[:, None, :]
        return huber_quantile_loss(fractions.tau_hat, deltas, cfg.epsilon), deltas

    _, deltas = huber(est.values)
    d_values = np.zeros_like(est.values)
    d_values[rows, :, actions] = huber_quantile_loss_grad(fractions.tau_hat, deltas, cfg.epsilon)
    grads = stbp_backward(tape, params, d_values)

    def loss():
        _, e, _ = full_forward(obs, params, net, key=key, fractions=fractions, record=False)
        return huber(e.values)[0]

    records = []
    numeric = {}
    for name in params:
        if name == "w_f":
            continue
        numeric[name] = central_difference(loss, params[name], cfg.step)
        records.append(_record(name, grads[name], numeric[name], cfg.threshold))

    if net.fusion == "mcn+population":
        closed = paper_dendrite_grads(tape, params, d_values)
        for name in ("w_b", "w_a"):
            records.append(_record(f"{name}[closed-form]", closed[name], numeric[name], cfg.threshold,
                                   asserted=False))

    # fraction proposal: exact objective for a fixed monotone quantile function
    F = Polynomial([-0.3, 0.8, 0.0, 1.5])
    O_s = tape.layers["O_s"]

    def wl():
        from ..network import propose_fractions
        return float(wasserstein_loss(propose_fractions(O_s, params["w_f"]).tau, F).mean())

    num_f = central_difference(wl, params["w_f"], cfg.step)
    g_tau = wasserstein_grad_tau(F(fractions.tau[:, 1:-1]), F(fractions.tau_hat))
    for mode, asserted in (("softmax-chain", True), ("paper", False)):
        ana = fraction_weight_grad(g_tau, fractions.p, O_s, mode=mode)
        records.append(_record(f"w_f[{mode}]", ana, num_f, cfg.threshold, asserted=asserted))
    return records


def verify_all(threshold: float = 1e-4) -> list[dict]:
    """Gradient records for every fusion mode plus the convolutional encoder."""
    out = []
    for fusion in ("mcn+population", "li+population", "li+cosine"):
        for r in verify_gradients(GradCheckConfig(fusion=fusion, threshold=threshold)):
            out.append({**r, "name": f"{fusion}/{r['name']}"})
    for r in verify_gradients(GradCheckConfig(encoder="conv", batch=1, threshold=threshold)):
        if r["name"].startswith("enc"):
            out.append({**r, "name": f"conv/{r['name']}"})
    return out
