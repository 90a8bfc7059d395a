"""Spatio-temporal backpropagation through a recorded forward pass."""

from __future__ import annotations

import numpy as np

from .. import layers as L
from ..network import NetworkParams, TapeRecord

__all__ = ["stbp_backward", "fusion_output_error", "paper_dendrite_grads"]


def _flat(x):
    return x.reshape(-1, x.shape[-1])


def _head_backward(tape: TapeRecord, params: NetworkParams, d_values, grads):
    cfg, T = tape.config, tape.T
    hid = tape.layers["hidden"]
    expected = hid["spikes"].shape[1:-1] + (params["w_l"].shape[1],)
    if d_values.shape != expected:
        raise ValueError(f"output gradient shape {d_values.shape} does not match tape {expected}")
    d_values = d_values.astype(hid["spikes"].dtype)
    grads["w_l"] = _flat(hid["spikes"].mean(axis=0)).T @ _flat(d_values)
    d_o = np.broadcast_to((d_values @ params["w_l"].T) / T, hid["spikes"].shape)
    d_cur = L.lif_backward(d_o, hid["spikes"], hid["u_pre"], cfg.spike_fn)
    grads["w_h"] = _flat(hid["input"]).T @ _flat(d_cur)
    return d_cur @ params["w_h"].T


def fusion_output_error(tape: TapeRecord, params: NetworkParams, d_values) -> np.ndarray:
    """Loss gradient at the fusion layer output (MCN spikes), per step."""
    grads = {}
    return _head_backward(tape, params, np.asarray(d_values), grads)


def stbp_backward(tape: TapeRecord, params: NetworkParams, d_values) -> dict:
    """Gradients of every weight given ``d_values = dLoss/dQuantiles [B, K, A]``.

    Fractions are treated as constants, so ``w_f`` receives a zero gradient
    here (it is trained through the Wasserstein objective instead).
    """
    cfg, T = tape.config, tape.T
    fn = cfg.spike_fn
    for name, shape in cfg.param_shapes().items():
        if params[name].shape != tuple(shape):
            raise ValueError(f"parameter {name!r} shape {params[name].shape} does not match tape {shape}")
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    d_fused = _head_backward(tape, params, np.asarray(d_values), grads)

    fus = tape.layers["fusion"]
    if cfg.fusion == "mcn+population":
        d_xb, d_xa = L.mcn_backward(d_fused, fus, fn)
    else:
        u_s, u_f = fus["u_s"], fus["u_f"]
        expand = u_f.ndim == u_s.ndim + 1
        u_s_b = u_s[..., None, :] if expand else u_s
        d_us = d_fused * u_f
        if expand:
            d_us = d_us.sum(axis=-2)
        d_xb = L.li_backward(d_us, cfg.neuron)
        d_xa = L.li_backward(d_fused * u_s_b, cfg.neuron)

    O_s, S_tau = fus["O_s"], fus["S_tau"]
    grads["w_b"] = _flat(O_s).T @ _flat(d_xb)
    d_O = d_xb @ params["w_b"].T
    if S_tau.shape[0] == 1 and T > 1:
        # cosine embedding is constant over the window
        grads["w_a"] = _flat(S_tau[0]).T @ _flat(d_xa.sum(axis=0))
    else:
        grads["w_a"] = _flat(S_tau).T @ _flat(d_xa)
        pop = tape.layers["population"]
        d_S = d_xa @ params["w_a"].T
        d_cur = L.lif_backward(d_S, pop["spikes"], pop["u_pre"], fn)
        grads["w_pop"] = _flat(pop["input"]).T @ _flat(d_cur)

    _encoder_backward(tape, params, d_O, grads)
    return grads


def _encoder_backward(tape: TapeRecord, params, d_O, grads):
    cfg, T = tape.config, tape.T
    fn = cfg.spike_fn
    recs = tape.layers["encoder"]
    enc = cfg.encoder
    if enc.kind == "dense":
        d_x = d_O
        for i in range(len(recs) - 1, -1, -1):
            rec = recs[i]
            d_cur = L.lif_backward(d_x, rec["spikes"], rec["u_pre"], fn)
            if i == 0:
                grads["enc0"] = rec["input"].T @ d_cur.sum(axis=0)
            else:
                grads[f"enc{i}"] = _flat(rec["input"]).T @ _flat(d_cur)
                d_x = d_cur @ params[f"enc{i}"].T
        return
    d_x = d_O.reshape(recs[-1]["spikes"].shape)
    for i in range(len(recs) - 1, -1, -1):
        rec = recs[i]
        d_cur = L.lif_backward(d_x, rec["spikes"], rec["u_pre"], fn)
        w = params[f"enc{i}"]
        if i == 0:
            grads["enc0"] = L.conv2d_weight_grad(rec["input"], d_cur.sum(axis=0), w.shape, enc.strides[0])
        else:
            x = rec["input"]
            B = x.shape[1]
            flat_x = x.reshape((T * B,) + x.shape[2:])
            flat_d = d_cur.reshape((T * B,) + d_cur.shape[2:])
            grads[f"enc{i}"] = L.conv2d_weight_grad(flat_x, flat_d, w.shape, enc.strides[i])
            d_x = L.conv2d_input_grad(flat_d, w, flat_x.shape, enc.strides[i]).reshape(x.shape)


def paper_dendrite_grads(tape: TapeRecord, params: NetworkParams, d_values) -> dict:
    """Closed-form dendritic weight gradients in the published form.

    For the basal weights::

        sum_t sum_{k<=t} d_o[t] * sg(u[t]) * m^(T-1-t) * g_B/(g_L tau_L)
                          * (1 - 1/tau_B)^(t-k) / tau_B * O_s[k]

    (steps 0-based) and analogously for the apical weights with ``S_tau``.
    It ignores the reset path and weights each step by ``m^(T-1-t)`` rather
    than propagating the soma recurrence, so it agrees with
    :func:`stbp_backward` only for ``T = 1``.
    """
    cfg, T = tape.config, tape.T
    if cfg.fusion != "mcn+population":
        raise ValueError("dendritic gradients exist only for the multi-compartment fusion")
    p, fn = cfg.neuron, cfg.spike_fn
    fus = tape.layers["fusion"]
    d_o = fusion_output_error(tape, params, d_values)
    m = p.soma_decay
    powers = np.array([m ** (T - 1 - t) for t in range(T)], dtype=d_o.dtype)
    coef = d_o * fn.grad(fus["u_pre"]) * powers.reshape((T,) + (1,) * (d_o.ndim - 1))
    O_filt = L.leaky_forward(fus["O_s"] / p.tau_B, 1.0 - 1.0 / p.tau_B, T)
    S_filt = L.leaky_forward(fus["S_tau"] / p.tau_A, 1.0 - 1.0 / p.tau_A, T)
    coef_b = coef.sum(axis=-2) if coef.ndim == O_filt.ndim + 1 else coef
    return {
        "w_b": p.basal_gain * (_flat(O_filt).T @ _flat(coef_b)),
        "w_a": p.apical_gain * (_flat(S_filt).T @ _flat(coef)),
    }
