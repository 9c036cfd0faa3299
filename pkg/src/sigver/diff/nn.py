"""Parameterised layers built from the primitives in :mod:`ops`."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import ops
from .tensor import Parameter, Tensor, as_tensor


class ConfigError(ValueError):
    pass


class Module:
    """Owns parameters and sub-modules; names follow attribute paths."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for attr, value in vars(self).items():
            name = f"{prefix}{attr}"
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for k, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}{k}.")

    def parameters(self) -> dict[str, Parameter]:
        params = dict(self.named_parameters())
        for name, p in params.items():
            p.name = name
        return params

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters().values()))


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape, dtype) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, dtype=np.float32,
                 bias: bool = True):
        self.weight = Parameter(_glorot(rng, d_in, d_out, (d_in, d_out), dtype))
        self.bias = Parameter(np.zeros(d_out, dtype=dtype)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return ops.affine(x, self.weight, self.bias)


class Conv1d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator,
                 dtype=np.float32):
        # He-uniform: these feed relu
        limit = math.sqrt(6.0 / (kernel * c_in))
        self.weight = Parameter(rng.uniform(-limit, limit, size=(kernel, c_in, c_out)).astype(dtype))
        self.bias = Parameter(np.zeros(c_out, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv1d(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, d: int, dtype=np.float32, eps: float = 1e-5):
        self.gamma = Parameter(np.ones(d, dtype=dtype))
        self.beta = Parameter(np.zeros(d, dtype=dtype))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta, self.eps)


class MultiHeadAttention(Module):
    """Scaled dot-product self-attention, ``heads`` parallel heads, output projection."""

    def __init__(self, d: int, heads: int, rng: np.random.Generator, dtype=np.float32):
        if heads < 1 or d % heads:
            raise ConfigError(f"model width {d} is not divisible by {heads} heads")
        self.heads = heads
        self.wq = Linear(d, d, rng, dtype)
        # a key bias shifts every score in a row equally; softmax cancels it
        self.wk = Linear(d, d, rng, dtype, bias=False)
        self.wv = Linear(d, d, rng, dtype)
        self.wo = Linear(d, d, rng, dtype)
        self.last_weights: np.ndarray | None = None

    def _split(self, x: Tensor) -> Tensor:
        b, t, d = x.shape
        return ops.transpose(ops.reshape(x, (b, t, self.heads, d // self.heads)), (0, 2, 1, 3))

    def __call__(self, x: Tensor) -> Tensor:
        squeeze = x.ndim == 2
        if squeeze:
            x = ops.reshape(x, (1, *x.shape))
        if x.ndim != 3:
            raise ops.ShapeError(f"multi_head_attention: expected (T, d) or (B, T, d), got {x.shape}")
        b, t, d = x.shape
        q, k, v = self._split(self.wq(x)), self._split(self.wk(x)), self._split(self.wv(x))
        scale = 1.0 / math.sqrt(d // self.heads)
        # scaling q is cheaper than scaling the (T, T) scores and mathematically identical
        scores = ops.matmul(ops.mul(q, scale), ops.swapaxes(k, -1, -2))
        weights = ops.softmax(scores)
        self.last_weights = weights.data
        ctx = ops.matmul(weights, v)
        ctx = ops.reshape(ops.transpose(ctx, (0, 2, 1, 3)), (b, t, d))
        out = self.wo(ctx)
        if squeeze:
            out = ops.reshape(out, (t, d))
        return out


class GRU(Module):
    """Gated recurrent unit from a zero state; returns the final hidden state."""

    def __init__(self, d_in: int, hidden: int, rng: np.random.Generator, dtype=np.float32):
        self.hidden = hidden
        self.w_ih = Parameter(_glorot(rng, d_in, hidden, (d_in, 3 * hidden), dtype))
        self.b_ih = Parameter(np.zeros(3 * hidden, dtype=dtype))
        self.w_hh = Parameter(_glorot(rng, hidden, hidden, (hidden, 3 * hidden), dtype))
        self.b_hh = Parameter(np.zeros(3 * hidden, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        squeeze = x.ndim == 2
        if squeeze:
            x = ops.reshape(x, (1, *x.shape))
        if x.ndim != 3 or x.shape[1] < 1:
            raise ops.ShapeError(f"gru_sequence: expected (T>=1, d) or (B, T, d), got {x.shape}")
        h = ops.gru_scan(ops.affine(x, self.w_ih, self.b_ih), self.w_hh, self.b_hh)
        if squeeze:
            h = ops.reshape(h, (self.hidden,))
        return h


def multi_head_attention(x, heads: int, *, seed: int = 0) -> Tensor:
    """Functional form with freshly initialised projections (for tests and demos)."""
    x = as_tensor(x)
    layer = MultiHeadAttention(x.shape[-1], heads, np.random.default_rng(seed), x.dtype)
    return layer(x)


def gru_sequence(x, hidden: int, *, seed: int = 0) -> Tensor:
    x = as_tensor(x)
    layer = GRU(x.shape[-1], hidden, np.random.default_rng(seed), x.dtype)
    return layer(x)
