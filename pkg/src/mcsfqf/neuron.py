"""Discrete-time LIF, LI and multi-compartment neuron dynamics.

All updates are explicit Euler steps with unit step size, so a time constant
``tau`` turns into the leak factor ``1 - 1/tau``.  The multi-compartment
neuron (MCN) has a basal dendrite, an apical dendrite and a soma::

    v_b' = (1 - 1/tau_B) v_b + x_b / tau_B
    v_a' = (1 - 1/tau_A) v_a + x_a / tau_A
    u'   = m u + g_B/(g_L tau_L) v_b' + g_A/(g_L tau_L) v_a'

with ``m = 1 - 1/tau_L - g_B/(g_L tau_L) - g_A/(g_L tau_L)``.  The soma spikes
when ``u' > v_th`` (strict) and is then hard-reset to ``v_reset``.  Dendrites
never see the somatic spike.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import cumulative_simpson

__all__ = [
    "NeuronParams",
    "LifState",
    "McnState",
    "SpikeTrain",
    "lif_step",
    "li_step",
    "dendrite_step",
    "mcn_soma_step",
    "mcn_closed_form",
    "integrate_mcn",
    "simulate_mcn",
    "surrogate_grad",
    "smooth_spike",
]


@dataclass(frozen=True)
class NeuronParams:
    """Membrane and conductance constants shared by every neuron model.

    Defaults are the RL settings (decay 2, threshold 1, reset 0, all
    conductances 1).
    """

    tau_L: float = 2.0
    tau_A: float = 2.0
    tau_B: float = 2.0
    g_A: float = 1.0
    g_B: float = 1.0
    g_L: float = 1.0
    v_th: float = 1.0
    v_reset: float = 0.0

    def __post_init__(self):
        for name in ("tau_L", "tau_A", "tau_B"):
            if not getattr(self, name) >= 1.0:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.g_L > 0:
            raise ValueError(f"g_L must be > 0, got {self.g_L}")
        if self.g_A < 0 or self.g_B < 0:
            raise ValueError("g_A and g_B must be non-negative")
        if not self.v_th > self.v_reset:
            raise ValueError(f"v_th ({self.v_th}) must exceed v_reset ({self.v_reset})")

    @property
    def basal_gain(self) -> float:
        return self.g_B / (self.g_L * self.tau_L)

    @property
    def apical_gain(self) -> float:
        return self.g_A / (self.g_L * self.tau_L)

    @property
    def soma_decay(self) -> float:
        """Recurrence factor ``m`` of the somatic potential."""
        return 1.0 - 1.0 / self.tau_L - self.basal_gain - self.apical_gain

    @property
    def z_rate(self) -> float:
        """Continuous-time somatic decay rate ``(g_B + g_A + g_L) / (tau_L g_L)``."""
        return (self.g_B + self.g_A + self.g_L) / (self.tau_L * self.g_L)

    def with_step(self, h: float) -> "NeuronParams":
        """Parameters whose unit step equals a step of size ``h`` of these."""
        return replace(self, tau_L=self.tau_L / h, tau_A=self.tau_A / h, tau_B=self.tau_B / h)


@dataclass
class LifState:
    u: np.ndarray
    last_spike: np.ndarray

    @classmethod
    def zeros(cls, n, dtype=np.float64) -> "LifState":
        return cls(np.zeros(n, dtype), np.zeros(n, dtype))


@dataclass
class McnState:
    v_b: np.ndarray
    v_a: np.ndarray
    u: np.ndarray
    last_spike: np.ndarray

    @classmethod
    def zeros(cls, n, dtype=np.float64) -> "McnState":
        z = lambda: np.zeros(n, dtype)  # noqa: E731
        return cls(z(), z(), z(), z())


@dataclass(frozen=True)
class SpikeTrain:
    """Binary activity, indexed ``[time step, neuron]``."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim < 1:
            raise ValueError("spike train needs a time axis")
        if not np.all((d == 0) | (d == 1)):
            raise ValueError("spike train entries must be 0 or 1")

    @property
    def T(self) -> int:
        return int(np.shape(self.data)[0])

    def count(self) -> np.ndarray:
        return np.asarray(self.data).sum(axis=0)


def _check_finite(x, what="input"):
    x = np.asarray(x, dtype=float)
    bad = ~np.isfinite(x)
    if bad.any():
        idx = np.argwhere(bad)[0]
        idx = int(idx[0]) if idx.size == 1 else tuple(int(i) for i in idx)
        raise ValueError(f"non-finite {what} at neuron index {idx}: {x[bad][0]}")
    return x


def _fire(u, params: NeuronParams):
    spikes = (u > params.v_th).astype(u.dtype)
    u = np.where(spikes > 0, params.v_reset, u)
    return u, spikes


def lif_step(state: LifState, x, params: NeuronParams) -> tuple[LifState, np.ndarray]:
    """Advance LIF neurons one step; returns the new state and the spikes."""
    x = _check_finite(x)
    u = (1.0 - 1.0 / params.tau_L) * np.asarray(state.u, dtype=float) + x / params.tau_L
    u, spikes = _fire(u, params)
    return LifState(u, spikes), spikes


def li_step(state: LifState, x, params: NeuronParams) -> LifState:
    """Leaky integration without threshold; the potential is the output."""
    x = _check_finite(x)
    u = (1.0 - 1.0 / params.tau_L) * np.asarray(state.u, dtype=float) + x / params.tau_L
    return LifState(u, np.zeros_like(u))


def dendrite_step(v, x, tau: float):
    if tau < 1:
        raise ValueError(f"dendritic time constant must be >= 1, got {tau}")
    return (1.0 - 1.0 / tau) * v + x / tau


_warned_decay: set = set()


def _warn_decay(params: NeuronParams):
    m = params.soma_decay
    key = (params.tau_L, params.g_A, params.g_B, params.g_L)
    if key in _warned_decay:
        return
    if abs(m) >= 1:
        _warned_decay.add(key)
        warnings.warn(f"somatic recurrence factor m={m:.4g} has |m| >= 1; soma is unstable",
                      RuntimeWarning, stacklevel=3)
    elif m < 0:
        _warned_decay.add(key)
        warnings.warn(f"somatic recurrence factor m={m:.4g} < 0; soma potential oscillates",
                      RuntimeWarning, stacklevel=3)


def mcn_soma_step(state: McnState, params: NeuronParams) -> tuple[McnState, np.ndarray]:
    """Integrate already-advanced dendritic potentials into the soma."""
    _warn_decay(params)
    u = (params.soma_decay * np.asarray(state.u, dtype=float)
         + params.basal_gain * state.v_b + params.apical_gain * state.v_a)
    u = _check_finite(u, "somatic potential")
    u, spikes = _fire(u, params)
    return McnState(state.v_b, state.v_a, u, spikes), spikes


def simulate_mcn(x_b, x_a, params: NeuronParams, T: int, n: int = 1) -> dict[str, np.ndarray]:
    """Run ``T`` unit steps of MCNs driven by basal/apical currents.

    ``x_b``/``x_a`` may be scalars, per-neuron vectors or ``[T, n]`` arrays.
    Returns per-step traces ``v_b``, ``v_a``, ``u`` and ``spikes`` of shape ``[T, n]``.
    """
    x_b = np.broadcast_to(np.asarray(x_b, dtype=float), (T, n))
    x_a = np.broadcast_to(np.asarray(x_a, dtype=float), (T, n))
    state = McnState.zeros(n)
    out = {k: np.zeros((T, n)) for k in ("v_b", "v_a", "u", "spikes")}
    for t in range(T):
        state.v_b = dendrite_step(state.v_b, x_b[t], params.tau_B)
        state.v_a = dendrite_step(state.v_a, x_a[t], params.tau_A)
        state, s = mcn_soma_step(state, params)
        out["v_b"][t], out["v_a"][t], out["u"][t], out["spikes"][t] = state.v_b, state.v_a, state.u, s
    return out


def integrate_mcn(x_b, x_a, params: NeuronParams, t_end: float, h: float) -> dict[str, np.ndarray]:
    """Subthreshold Euler integration of the MCN equations with step ``h``.

    Equivalent to unit steps of ``params.with_step(h)`` with spiking disabled;
    written as a scalar loop because fine grids need ~1e5 steps.  ``x_b`` and
    ``x_a`` are constant drives.  Returns ``t``, ``v_b``, ``v_a``, ``u`` sampled
    at ``0, h, 2h, ...``.
    """
    n = int(round(t_end / h))
    p = params.with_step(h)
    kb, ka = 1.0 - 1.0 / p.tau_B, 1.0 - 1.0 / p.tau_A
    ib, ia = float(x_b) / p.tau_B, float(x_a) / p.tau_A
    m, cb, ca = p.soma_decay, p.basal_gain, p.apical_gain
    vb = va = u = 0.0
    vbs, vas, us = [0.0], [0.0], [0.0]
    for _ in range(n):
        vb = kb * vb + ib
        va = ka * va + ia
        u = m * u + cb * vb + ca * va
        vbs.append(vb)
        vas.append(va)
        us.append(u)
    return {"t": np.arange(n + 1) * h, "v_b": np.array(vbs), "v_a": np.array(vas), "u": np.array(us)}


def mcn_closed_form(t, v_b, v_a, params: NeuronParams) -> np.ndarray:
    """Somatic potential as the exponentially weighted integral of dendritic drive.

    ``u(t) = exp(-Z t) * int_0^t exp(Z s) / tau_L * (g_B/g_L V_b(s) + g_A/g_L V_a(s)) ds``
    with ``Z = (g_B + g_A + g_L) / (tau_L g_L)`` and ``u(0) = 0``.  The integral
    is evaluated with cumulative Simpson quadrature over the sample grid ``t``.
    Returns ``u`` at every grid point.
    """
    t = np.asarray(t, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise ValueError("closed form needs a dendritic trace with at least 2 samples")
    v_b = np.broadcast_to(np.asarray(v_b, dtype=float), t.shape)
    v_a = np.broadcast_to(np.asarray(v_a, dtype=float), t.shape)
    z = params.z_rate
    drive = (params.g_B * v_b + params.g_A * v_a) / (params.g_L * params.tau_L)
    # shift the exponent by t[-1] to keep exp() in range on long windows
    weight = np.exp(z * (t - t[-1]))
    integral = cumulative_simpson(weight * drive, x=t, initial=0.0)
    return integral * np.exp(-z * (t - t[-1]))


def _centered(u, tau_L, center):
    return math.pi * tau_L * (np.asarray(u) - center)


def surrogate_grad(u, tau_L: float, center: float = 0.0):
    """Pseudo-derivative ``2 tau_L / (4 + (pi tau_L (u - center))^2)`` of a spike."""
    a = _centered(u, tau_L, center)
    return 2.0 * tau_L / (4.0 + a * a)


def smooth_spike(u, tau_L: float, center: float = 0.0):
    """Arctan activation whose exact derivative is :func:`surrogate_grad`."""
    return np.arctan(_centered(u, tau_L, center) / 2.0) / math.pi + 0.5
