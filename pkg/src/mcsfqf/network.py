"""Forward pass of the spiking fully-parameterised quantile network.

Pipeline for a batch of observations (``T`` simulation steps, static input)::

    obs -> LIF encoder -> O_s [T, B, E]
    O_s -> fraction proposal (W_f, softmax, cumulative sum) -> tau, tau_hat
    tau_hat -> population spikes -> LIF stage -> S_tau [T, B, N, M]
    (O_s, S_tau) -> fusion -> [T, B, N, n_fuse]
    fusion -> hidden LIF layer -> mean_t(spikes) @ W_L -> quantiles [B, N, A]
    quantiles, tau -> Q [B, A]

Three fusion modes are supported: ``mcn+population`` (multi-compartment
neurons, basal <- state, apical <- fraction spikes), ``li+population`` (two LI
groups whose potentials are multiplied) and ``li+cosine`` (as before, but the
fraction enters as ``cos(i pi tau)`` instead of population spikes).

Parameters live in a plain ``dict[str, ndarray]``.  When a forward pass is
recorded, every layer's inputs, pre-reset potentials and outputs are kept in
a :class:`TapeRecord` for :func:`mcsfqf.learning.stbp_backward`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers as L
from .encoding import PopulationCodec, cosine_embedding, encode_population_spikes
from .neuron import NeuronParams

FUSION_MODES = ("mcn+population", "li+population", "li+cosine")

NetworkParams = dict  # name -> ndarray


@dataclass(frozen=True)
class EncoderSpec:
    """State encoder geometry.

    ``dense``: LIF layers of widths ``hidden`` on the flattened observation.
    ``conv``: three LIF conv layers (8x8-32 stride 4, 4x4-64 stride 2,
    3x3-64 stride 1 by default) on a ``[C, H, W]`` image.
    """

    kind: str = "dense"
    hidden: tuple = (64, 64)
    channels: tuple = (32, 64, 64)
    kernels: tuple = (8, 4, 3)
    strides: tuple = (4, 2, 1)

    def __post_init__(self):
        if self.kind not in ("dense", "conv"):
            raise ValueError(f"encoder kind must be 'dense' or 'conv', got {self.kind!r}")
        if self.kind == "conv" and not (len(self.channels) == len(self.kernels) == len(self.strides)):
            raise ValueError("conv encoder needs matching channels/kernels/strides")

    def weight_shapes(self, obs_shape: tuple) -> list[tuple]:
        if self.kind == "dense":
            sizes = [int(np.prod(obs_shape))] + list(self.hidden)
            return [(a, b) for a, b in zip(sizes[:-1], sizes[1:])]
        if len(obs_shape) != 3:
            raise ValueError(f"conv encoder expects [C, H, W] observations, got {obs_shape}")
        c, h, w = obs_shape
        shapes = []
        for co, k, s in zip(self.channels, self.kernels, self.strides):
            shapes.append((co, c, k, k))
            c, h, w = co, L.conv_out_size(h, k, s), L.conv_out_size(w, k, s)
        return shapes

    def embed_dim(self, obs_shape: tuple) -> int:
        if self.kind == "dense":
            return self.hidden[-1]
        c, h, w = obs_shape
        for co, k, s in zip(self.channels, self.kernels, self.strides):
            c, h, w = co, L.conv_out_size(h, k, s), L.conv_out_size(w, k, s)
        return c * h * w


@dataclass(frozen=True)
class NetworkConfig:
    obs_shape: tuple
    n_actions: int
    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    neuron: NeuronParams = field(default_factory=NeuronParams)
    T: int = 8
    N: int = 32
    M: int = 64
    C: float = 0.05
    n_mcn: int = 512
    n_hidden: int = 512
    fusion: str = "mcn+population"
    surrogate_center: str = "threshold"
    smooth: bool = False
    codec_seed: int = 0
    init_gain: float = 3.0

    def __post_init__(self):
        if self.fusion not in FUSION_MODES:
            raise ValueError(f"fusion must be one of {FUSION_MODES}, got {self.fusion!r}")
        if self.T < 1 or self.N < 1:
            raise ValueError("T and N must be >= 1")

    @property
    def spike_fn(self) -> L.SpikeFn:
        return L.SpikeFn(self.neuron, self.surrogate_center, self.smooth)

    @property
    def codec(self) -> PopulationCodec:
        return PopulationCodec(m=self.M, sigma=self.C, seed=self.codec_seed)

    @property
    def embed_dim(self) -> int:
        return self.encoder.embed_dim(self.obs_shape)

    def param_shapes(self) -> dict[str, tuple]:
        shapes = {f"enc{i}": s for i, s in enumerate(self.encoder.weight_shapes(self.obs_shape))}
        shapes["w_f"] = (self.N, self.embed_dim)
        if self.fusion != "li+cosine":
            shapes["w_pop"] = (self.M, self.M)
        shapes["w_b"] = (self.embed_dim, self.n_mcn)
        shapes["w_a"] = (self.M, self.n_mcn)
        shapes["w_h"] = (self.n_mcn, self.n_hidden)
        shapes["w_l"] = (self.n_hidden, self.n_actions)
        return shapes


@dataclass
class FractionSet:
    """Proposed fractions per sample: ``tau [B, N+1]``, ``tau_hat [B, N]``, ``p [B, N]``."""

    tau: np.ndarray
    tau_hat: np.ndarray
    p: np.ndarray
    logits: np.ndarray | None = None

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.tau, axis=-1)

    def entropy(self) -> np.ndarray:
        p = np.clip(self.p, 1e-300, None)
        return -(self.p * np.log(p)).sum(axis=-1)


@dataclass
class QuantileEstimate:
    values: np.ndarray  # [B, N, A] at tau_hat
    q: np.ndarray  # [B, A]


@dataclass
class TapeRecord:
    """Per-step forward state of one recorded pass."""

    T: int
    config: NetworkConfig
    key: int
    layers: dict = field(default_factory=dict)


def init_params(config: NetworkConfig, rng: np.random.Generator, dtype=np.float32) -> NetworkParams:
    """Gaussian initialisation scaled so that layers fire at the start of training."""
    params = {}
    g = config.init_gain
    for name, shape in config.param_shapes().items():
        if name == "w_f":
            w = np.zeros(shape)
        elif name == "w_l":
            w = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), shape)
        else:
            fan_in = int(np.prod(shape[1:])) if name.startswith("enc") and len(shape) == 4 else shape[0]
            if name == "enc0" and config.encoder.kind == "dense":
                w = rng.normal(g / 2, g / 2, shape)
            else:
                w = rng.normal(0.5 * g / np.sqrt(fan_in), g / np.sqrt(fan_in), shape)
        params[name] = w.astype(dtype)
    return params


def zero_params(config: NetworkConfig, dtype=np.float32) -> NetworkParams:
    return {k: np.zeros(s, dtype) for k, s in config.param_shapes().items()}


def _check_shapes(params: NetworkParams, config: NetworkConfig):
    for name, shape in config.param_shapes().items():
        if name not in params:
            raise ValueError(f"missing parameter {name!r}")
        if tuple(params[name].shape) != tuple(shape):
            raise ValueError(f"parameter {name!r}: expected shape {shape}, got {params[name].shape}")


def encode_state(obs, params: NetworkParams, config: NetworkConfig, tape: TapeRecord | None = None):
    """State embedding spikes ``O_s [T, B, E]`` for a batch of observations."""
    obs = np.asarray(obs, dtype=params["enc0"].dtype)
    want = tuple(config.obs_shape)
    if obs.shape[1:] != want:
        raise ValueError(f"observation shape mismatch: expected (B, {', '.join(map(str, want))}), "
                         f"got {obs.shape}")
    fn, T = config.spike_fn, config.T
    enc = config.encoder
    n_layers = len(enc.weight_shapes(want))
    recs = []
    if enc.kind == "dense":
        x = obs.reshape(obs.shape[0], -1)
        drive = (x @ params["enc0"])[None]
        for i in range(n_layers):
            if i > 0:
                drive = x @ params[f"enc{i}"]
            o, u = L.lif_forward(drive, fn, T)
            recs.append({"input": x, "u_pre": u, "spikes": o})
            x = o
        out = x
    else:
        B = obs.shape[0]
        x = obs
        drive = L.conv2d(obs, params["enc0"], enc.strides[0])[None]
        for i in range(n_layers):
            if i > 0:
                flat = x.reshape((T * B,) + x.shape[2:])
                drive = L.conv2d(flat, params[f"enc{i}"], enc.strides[i])
                drive = drive.reshape((T, B) + drive.shape[1:])
            o, u = L.lif_forward(drive, fn, T)
            recs.append({"input": x, "u_pre": u, "spikes": o})
            x = o
        out = x.reshape(T, B, -1)
    if tape is not None:
        tape.layers["encoder"] = recs
        tape.layers["obs"] = obs
        tape.layers["O_s"] = out
    return out


def propose_fractions(O_s, w_f) -> FractionSet:
    """Fractions from time-averaged state spikes: logits, softmax, cumulative sum."""
    O_s = np.asarray(O_s)
    logits = O_s.mean(axis=0).astype(np.float64) @ np.asarray(w_f, dtype=np.float64).T
    return fractions_from_logits(logits)


def fractions_from_logits(logits) -> FractionSet:
    logits = np.asarray(logits, dtype=np.float64)
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    cum = np.cumsum(p, axis=-1)
    zeros = np.zeros(p.shape[:-1] + (1,))
    tau = np.concatenate([zeros, cum], axis=-1)
    tau[..., -1] = 1.0
    tau_hat = 0.5 * (tau[..., :-1] + tau[..., 1:])
    return FractionSet(tau=tau, tau_hat=tau_hat, p=p, logits=logits)


def uniform_fractions(N: int, batch: int = 1) -> FractionSet:
    return fractions_from_logits(np.zeros((batch, N)))


def embed_fractions(taus, params: NetworkParams, config: NetworkConfig, key: int = 0,
                    tape: TapeRecord | None = None):
    """Apical input for fractions ``taus [B, K]``.

    Population modes return LIF-stage spikes ``[T, B, K, M]``; cosine mode
    returns ``cos(i pi tau)`` with a singleton time axis ``[1, B, K, M]``.
    """
    dtype = params["w_a"].dtype
    if config.fusion == "li+cosine":
        emb = cosine_embedding(taus, config.M).astype(dtype)[None]
        if tape is not None:
            tape.layers["fraction_embedding"] = emb
        return emb
    raw = encode_population_spikes(config.codec, taus, config.T, key=key, dtype=dtype)
    o, u = L.lif_forward(raw @ params["w_pop"], config.spike_fn, config.T)
    if tape is not None:
        tape.layers["population"] = {"input": raw, "u_pre": u, "spikes": o}
    return o


def mcn_fuse(O_s, S_tau, w_b, w_a, config: NetworkConfig, tape: TapeRecord | None = None):
    """Multi-compartment fusion: basal <- state spikes, apical <- fraction spikes."""
    if O_s.shape[-1] != w_b.shape[0] or S_tau.shape[-1] != w_a.shape[0]:
        raise ValueError(f"fusion input mismatch: O_s {O_s.shape} vs w_b {w_b.shape}, "
                         f"S_tau {S_tau.shape} vs w_a {w_a.shape}")
    x_b = O_s @ w_b
    x_a = S_tau @ w_a
    rec = L.mcn_forward(x_b, x_a, config.spike_fn, config.T)
    if tape is not None:
        tape.layers["fusion"] = {"O_s": O_s, "S_tau": S_tau, **rec}
    return rec["spikes"]


def li_product_fuse(O_s, S_tau, w_b, w_a, config: NetworkConfig, tape: TapeRecord | None = None):
    """Two LI groups (state, fraction); their potentials are multiplied per step."""
    if O_s.shape[-1] != w_b.shape[0] or S_tau.shape[-1] != w_a.shape[0]:
        raise ValueError(f"fusion input mismatch: O_s {O_s.shape} vs w_b {w_b.shape}, "
                         f"S_tau {S_tau.shape} vs w_a {w_a.shape}")
    u_s = L.li_forward(O_s @ w_b, config.neuron, config.T)
    u_f = L.li_forward(S_tau @ w_a, config.neuron, config.T)
    u_s_b = u_s[..., None, :] if u_f.ndim == u_s.ndim + 1 else u_s
    fused = u_s_b * u_f
    if tape is not None:
        tape.layers["fusion"] = {"O_s": O_s, "S_tau": S_tau, "u_s": u_s, "u_f": u_f}
    return fused


def quantile_head(fused, w_h, w_l, config: NetworkConfig, tape: TapeRecord | None = None):
    """Hidden LIF layer, then ``mean_t(spikes) @ W_L``; returns ``[..., A]``."""
    o, u = L.lif_forward(fused @ w_h, config.spike_fn, config.T)
    values = o.mean(axis=0) @ w_l
    if tape is not None:
        tape.layers["hidden"] = {"input": fused, "u_pre": u, "spikes": o}
    return values


def q_values(fractions: FractionSet, values) -> np.ndarray:
    """``Q_a = sum_i (tau_{i+1} - tau_i) F^-1(tau_hat_i)``; ``values [..., N, A]``."""
    return np.einsum("...n,...na->...a", fractions.widths, np.asarray(values, dtype=np.float64))


def quantiles_at(O_s, taus, params: NetworkParams, config: NetworkConfig, key: int = 0,
                 tape: TapeRecord | None = None):
    """Quantile values ``[B, K, A]`` at arbitrary fractions ``taus [B, K]`` given ``O_s``."""
    emb = embed_fractions(taus, params, config, key=key, tape=tape)
    if config.fusion == "mcn+population":
        fused = mcn_fuse(O_s, emb, params["w_b"], params["w_a"], config, tape)
    else:
        fused = li_product_fuse(O_s, emb, params["w_b"], params["w_a"], config, tape)
    return quantile_head(fused, params["w_h"], params["w_l"], config, tape)


def full_forward(obs, params: NetworkParams, config: NetworkConfig, key: int = 0,
                 fractions: FractionSet | None = None, record: bool = True):
    """Complete pass: returns ``(FractionSet, QuantileEstimate, TapeRecord | None)``.

    ``fractions`` overrides the proposal (e.g. to evaluate a target network at
    the online network's fractions).  ``key`` seeds the population spikes.
    """
    _check_shapes(params, config)
    tape = TapeRecord(config.T, config, key) if record else None
    O_s = encode_state(obs, params, config, tape)
    if fractions is None:
        fractions = propose_fractions(O_s, params["w_f"])
    values = quantiles_at(O_s, fractions.tau_hat, params, config, key=key, tape=tape)
    if tape is not None:
        tape.layers["fractions"] = fractions
    return fractions, QuantileEstimate(values=values, q=q_values(fractions, values)), tape


def replay_tape(tape: TapeRecord, params: NetworkParams) -> dict[str, float]:
    """Re-run every recorded layer from its stored input; max abs potential mismatch per layer."""
    cfg, fn, T = tape.config, tape.config.spike_fn, tape.T
    out = {}
    enc = tape.layers["encoder"]
    for i, rec in enumerate(enc):
        x = rec["input"]
        if cfg.encoder.kind == "dense":
            drive = x @ params[f"enc{i}"]
            drive = drive[None] if i == 0 else drive
        elif i == 0:
            drive = L.conv2d(x, params["enc0"], cfg.encoder.strides[0])[None]
        else:
            B = x.shape[1]
            d = L.conv2d(x.reshape((T * B,) + x.shape[2:]), params[f"enc{i}"], cfg.encoder.strides[i])
            drive = d.reshape((T, B) + d.shape[1:])
        _, u = L.lif_forward(drive, fn, T)
        out[f"enc{i}"] = float(np.abs(u - rec["u_pre"]).max())
    if "population" in tape.layers:
        rec = tape.layers["population"]
        _, u = L.lif_forward(rec["input"] @ params["w_pop"], fn, T)
        out["population"] = float(np.abs(u - rec["u_pre"]).max())
    fus = tape.layers["fusion"]
    if cfg.fusion == "mcn+population":
        r = L.mcn_forward(fus["O_s"] @ params["w_b"], fus["S_tau"] @ params["w_a"], fn, T)
        out["fusion"] = float(max(np.abs(r[k] - fus[k]).max() for k in ("v_b", "v_a", "u_pre")))
    else:
        u_s = L.li_forward(fus["O_s"] @ params["w_b"], cfg.neuron, T)
        u_f = L.li_forward(fus["S_tau"] @ params["w_a"], cfg.neuron, T)
        out["fusion"] = float(max(np.abs(u_s - fus["u_s"]).max(), np.abs(u_f - fus["u_f"]).max()))
    rec = tape.layers["hidden"]
    _, u = L.lif_forward(rec["input"] @ params["w_h"], fn, T)
    out["hidden"] = float(np.abs(u - rec["u_pre"]).max())
    return out
