"""Time-unrolled spiking layer primitives with explicit backward passes.

Every spiking layer follows the same discrete-time update, per step ``t``::

    u_pre[t]  = k * u_post[t-1] + drive[t]
    o[t]      = spike(u_pre[t])
    u_post[t] = u_pre[t] * (1 - o[t]) + v_reset * o[t]

With hard spikes ``spike`` is the strict threshold and the backward pass uses
the surrogate derivative; in smooth mode ``spike`` is the arctan activation
and the backward pass is the exact gradient.  The reset path is
differentiated in both modes.

Backward functions take ``d_out`` (gradient w.r.t. the layer output at every
step) and walk time in reverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .neuron import NeuronParams, smooth_spike, surrogate_grad


@dataclass(frozen=True)
class SpikeFn:
    """Spike nonlinearity: hard threshold or arctan, plus its (pseudo) derivative."""

    neuron: NeuronParams
    center: str = "threshold"
    smooth: bool = False

    def __post_init__(self):
        if self.center not in ("threshold", "zero"):
            raise ValueError(f"surrogate_center must be 'threshold' or 'zero', got {self.center!r}")

    @property
    def offset(self) -> float:
        return self.neuron.v_th if self.center == "threshold" else 0.0

    def __call__(self, u):
        if self.smooth:
            return smooth_spike(u, self.neuron.tau_L, self.offset).astype(u.dtype)
        return (u > self.neuron.v_th).astype(u.dtype)

    def grad(self, u):
        return surrogate_grad(u, self.neuron.tau_L, self.offset).astype(u.dtype)


def _step_view(x, t):
    # drives may be broadcast over time (static input): shape [1, ...]
    return x[0] if x.shape[0] == 1 else x[t]


def spiking_forward(drive, decay: float, fn: SpikeFn, T: int):
    """Run a spiking population; ``drive`` is ``[T, ...]`` or ``[1, ...]``.

    Returns ``(spikes, u_pre)``, both ``[T, ...]``.
    """
    shape = (T,) + drive.shape[1:]
    u_pre = np.empty(shape, dtype=drive.dtype)
    o = np.empty(shape, dtype=drive.dtype)
    v_reset = fn.neuron.v_reset
    u = np.zeros(shape[1:], dtype=drive.dtype)
    for t in range(T):
        u = decay * u + _step_view(drive, t)
        u_pre[t] = u
        o[t] = fn(u)
        u = u * (1 - o[t]) + v_reset * o[t]
    return o, u_pre


def spiking_backward(d_out, o, u_pre, decay: float, fn: SpikeFn):
    """Gradient w.r.t. the per-step drive of :func:`spiking_forward`."""
    T = o.shape[0]
    d_drive = np.empty_like(u_pre)
    v_reset = fn.neuron.v_reset
    g_post = np.zeros(o.shape[1:], dtype=u_pre.dtype)
    for t in range(T - 1, -1, -1):
        d_o = d_out[t] + g_post * (v_reset - u_pre[t])
        d_u = d_o * fn.grad(u_pre[t]) + g_post * (1 - o[t])
        d_drive[t] = d_u
        g_post = d_u * decay
    return d_drive


def leaky_forward(drive, decay: float, T: int):
    """Linear leaky integrator ``v[t] = decay * v[t-1] + drive[t]``."""
    shape = (T,) + drive.shape[1:]
    v = np.empty(shape, dtype=drive.dtype)
    acc = np.zeros(shape[1:], dtype=drive.dtype)
    for t in range(T):
        acc = decay * acc + _step_view(drive, t)
        v[t] = acc
    return v


def leaky_backward(d_v, decay: float):
    d_drive = np.empty_like(d_v)
    g = np.zeros(d_v.shape[1:], dtype=d_v.dtype)
    for t in range(d_v.shape[0] - 1, -1, -1):
        g = d_v[t] + decay * g
        d_drive[t] = g
    return d_drive


def lif_forward(current, fn: SpikeFn, T: int):
    """LIF layer: ``u' = (1 - 1/tau_L) u + current / tau_L``, then spike/reset."""
    tau = fn.neuron.tau_L
    return spiking_forward(current / tau, 1.0 - 1.0 / tau, fn, T)


def lif_backward(d_out, o, u_pre, fn: SpikeFn):
    tau = fn.neuron.tau_L
    return spiking_backward(d_out, o, u_pre, 1.0 - 1.0 / tau, fn) / tau


def li_forward(current, neuron: NeuronParams, T: int):
    tau = neuron.tau_L
    return leaky_forward(current / tau, 1.0 - 1.0 / tau, T)


def li_backward(d_u, neuron: NeuronParams):
    tau = neuron.tau_L
    return leaky_backward(d_u, 1.0 - 1.0 / tau) / tau


def mcn_forward(x_b, x_a, fn: SpikeFn, T: int):
    """Multi-compartment layer.

    ``x_b`` is ``[T, *batch, n]`` and ``x_a`` is either the same shape or has one
    extra axis before ``n`` (several fractions sharing one basal drive).
    Returns a dict with ``v_b``, ``v_a``, ``u_pre`` and ``spikes``.
    """
    p = fn.neuron
    v_b = leaky_forward(x_b / p.tau_B, 1.0 - 1.0 / p.tau_B, T)
    v_a = leaky_forward(x_a / p.tau_A, 1.0 - 1.0 / p.tau_A, T)
    v_b_soma = v_b[..., None, :] if v_a.ndim == v_b.ndim + 1 else v_b
    drive = p.basal_gain * v_b_soma + p.apical_gain * v_a
    spikes, u_pre = spiking_forward(drive, p.soma_decay, fn, T)
    return {"v_b": v_b, "v_a": v_a, "u_pre": u_pre, "spikes": spikes}


def mcn_backward(d_spikes, rec: dict, fn: SpikeFn):
    """Return ``(d_x_b, d_x_a)`` for :func:`mcn_forward`."""
    p = fn.neuron
    d_drive = spiking_backward(d_spikes, rec["spikes"], rec["u_pre"], p.soma_decay, fn)
    d_v_a = p.apical_gain * d_drive
    d_v_b = p.basal_gain * d_drive
    if rec["v_a"].ndim == rec["v_b"].ndim + 1:
        d_v_b = d_v_b.sum(axis=-2)
    d_x_b = leaky_backward(d_v_b, 1.0 - 1.0 / p.tau_B) / p.tau_B
    d_x_a = leaky_backward(d_v_a, 1.0 - 1.0 / p.tau_A) / p.tau_A
    return d_x_b, d_x_a


def conv_out_size(size: int, kernel: int, stride: int) -> int:
    if size < kernel:
        raise ValueError(f"input size {size} smaller than kernel {kernel}")
    return (size - kernel) // stride + 1


def _windows(x, k, s):
    # [B, C, H, W] -> [B, C, Ho, Wo, k, k]
    return sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]


def conv2d(x, w, stride: int):
    """Valid cross-correlation, ``x [B, C, H, W]``, ``w [Co, C, k, k]``."""
    win = _windows(x, w.shape[-1], stride)
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # [B, Ho, Wo, Co]
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv2d_weight_grad(x, d_out, w_shape, stride: int):
    win = _windows(x, w_shape[-1], stride)
    return np.tensordot(d_out, win, axes=([0, 2, 3], [0, 2, 3]))


def conv2d_input_grad(d_out, w, x_shape, stride: int):
    B, Co, Ho, Wo = d_out.shape
    k = w.shape[-1]
    dx = np.zeros(x_shape, dtype=d_out.dtype)
    for i in range(k):
        for j in range(k):
            contrib = np.tensordot(d_out, w[:, :, i, j], axes=([1], [0]))  # [B, Ho, Wo, C]
            dx[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += contrib.transpose(0, 3, 1, 2)
    return dx
