"""Minimal dense-tensor reverse-mode differentiation on numpy."""

from . import ops
from .gradcheck import GradCheckReport, grad_check
from .nn import GRU, ConfigError, Conv1d, LayerNorm, Linear, Module, MultiHeadAttention
from .optim import Adam, adam_step
from .tensor import Parameter, Tensor, no_grad

__all__ = [
    "Adam", "ConfigError", "Conv1d", "GRU", "GradCheckReport", "LayerNorm", "Linear",
    "Module", "MultiHeadAttention", "Parameter", "Tensor", "adam_step", "grad_check",
    "no_grad", "ops",
]
