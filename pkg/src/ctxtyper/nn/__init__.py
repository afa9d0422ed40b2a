"""From-scratch GRU + attention classifier in float64 numpy.

The sequential recurrences live in kernels (JIT compiled when available);
model holds parameters, the forward pass, the exact analytic backward pass,
and the finite-difference gradient checker; adam is the optimizer.
"""

from .adam import AdamState, adam_step
from .kernels import backend_name
from .model import (
    GradCheckConfig,
    GruParams,
    ModelParams,
    attention_pool,
    backward,
    classify,
    forward_sample,
    grad_check,
    gru_forward,
    init_params,
    nll_loss,
    softmax_probs,
)

__all__ = [
    "AdamState",
    "adam_step",
    "backend_name",
    "GradCheckConfig",
    "GruParams",
    "ModelParams",
    "attention_pool",
    "backward",
    "classify",
    "forward_sample",
    "grad_check",
    "gru_forward",
    "init_params",
    "nll_loss",
    "softmax_probs",
]
