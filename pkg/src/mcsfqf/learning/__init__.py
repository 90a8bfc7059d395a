"""Losses, explicit STBP gradients, optimisers and gradient verification."""

from .fractions import (FRACTION_GRAD_MODES, fraction_jacobian, fraction_weight_grad, paper_delta,
                        wasserstein_grad_tau)
from .losses import huber_kernel, huber_quantile_loss, huber_quantile_loss_grad, td_errors
from .optim import OptimizerState, adam, adam_step, rmsprop, rmsprop_step
from .stbp import fusion_output_error, paper_dendrite_grads, stbp_backward
from .verify import GradCheckConfig, verify_all, verify_gradients

__all__ = [
    "FRACTION_GRAD_MODES", "fraction_jacobian", "fraction_weight_grad", "paper_delta",
    "wasserstein_grad_tau", "huber_kernel", "huber_quantile_loss", "huber_quantile_loss_grad",
    "td_errors", "OptimizerState", "adam", "adam_step", "rmsprop", "rmsprop_step",
    "fusion_output_error", "paper_dendrite_grads", "stbp_backward", "GradCheckConfig",
    "verify_all", "verify_gradients",
]
