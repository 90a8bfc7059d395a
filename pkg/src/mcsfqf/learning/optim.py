"""Adam and RMSprop over dicts of arrays (in-place, deterministic)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["OptimizerState", "adam", "rmsprop", "adam_step", "rmsprop_step"]


@dataclass
class OptimizerState:
    kind: str
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    alpha: float = 0.95
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam(lr: float = 1e-4, **kw) -> OptimizerState:
    return OptimizerState("adam", lr, **kw)


def rmsprop(lr: float = 2.5e-9, alpha: float = 0.95, eps: float = 1e-5) -> OptimizerState:
    return OptimizerState("rmsprop", lr, alpha=alpha, eps=eps)


def _check(params, grads, names):
    for k in names:
        if k not in params:
            raise ValueError(f"unknown parameter {k!r}")
        if params[k].shape != grads[k].shape:
            raise ValueError(f"gradient shape {grads[k].shape} != parameter shape {params[k].shape} for {k!r}")


def adam_step(opt: OptimizerState, params: dict, grads: dict, names=None) -> dict:
    """Bias-corrected Adam update of ``params[names]`` in place."""
    names = list(grads) if names is None else list(names)
    _check(params, grads, names)
    opt.step += 1
    b1, b2 = opt.beta1, opt.beta2
    c1, c2 = 1 - b1 ** opt.step, 1 - b2 ** opt.step
    for k in names:
        p, g = params[k], grads[k].astype(params[k].dtype, copy=False)
        m = opt.m.setdefault(k, np.zeros_like(p))
        v = opt.v.setdefault(k, np.zeros_like(p))
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= (opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)).astype(p.dtype)
    return params


def rmsprop_step(opt: OptimizerState, params: dict, grads: dict, names=None) -> dict:
    """RMSprop (mean-square accumulator, no momentum) in place."""
    names = list(grads) if names is None else list(names)
    _check(params, grads, names)
    opt.step += 1
    for k in names:
        p, g = params[k], grads[k].astype(params[k].dtype, copy=False)
        v = opt.v.setdefault(k, np.zeros_like(p))
        v *= opt.alpha
        v += (1 - opt.alpha) * g * g
        p -= (opt.lr * g / (np.sqrt(v) + opt.eps)).astype(p.dtype)
    return params
