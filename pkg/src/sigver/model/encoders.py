"""CNN front-end, Gaussian range encoding, encoder blocks and the four embedders."""

from __future__ import annotations

import math

import numpy as np

from ..diff import ops
from ..diff.nn import GRU, ConfigError, Conv1d, LayerNorm, Linear, Module, MultiHeadAttention
from ..diff.tensor import Parameter, Tensor
from .config import ModelConfig


class CNNFrontend(Module):
    """Three [conv -> relu -> max-pool 2] blocks: (B, L, C) -> (B, L/8, d_model)."""

    def __init__(self, cfg: ModelConfig, rng, dtype):
        self.input_shape = (cfg.input_length, cfg.input_channels)
        c = cfg.input_channels
        self.convs = []
        for k in cfg.conv_kernels:
            self.convs.append(Conv1d(c, cfg.d_model, k, rng, dtype))
            c = cfg.d_model
        self.trace: list[tuple[int, ...]] = []

    def __call__(self, x: Tensor) -> Tensor:
        if tuple(x.shape[-2:]) != self.input_shape:
            raise ops.ShapeError(f"cnn_frontend: expected (..., {self.input_shape[0]}, "
                                 f"{self.input_shape[1]}), got {x.shape}")
        self.trace = []
        for conv in self.convs:
            x = ops.maxpool1d(ops.relu(conv(x)), 2)
            self.trace.append(x.shape)
        return x


class GaussianRangeEncoding(Module):
    """Learnable positional encoding from K Gaussian ranges over positions 0..T-1.

    Position i receives sum_k w_ik e_k with w_ik proportional to
    N(i; mu_k, sigma_k) and normalised over k.  sigma_k = softplus(raw_k) > 0.
    """

    def __init__(self, length: int, d: int, ranges: int, rng, dtype):
        if ranges < 2:
            raise ConfigError("Gaussian range encoding needs at least 2 ranges")
        self.length = length
        self.mu = Parameter(np.arange(ranges, dtype=np.float64) * length / ranges, dtype=dtype)
        sigma0 = length / ranges
        # inverse softplus of sigma0
        self.sigma_raw = Parameter(np.full(ranges, sigma0 + math.log(-math.expm1(-sigma0))),
                                   dtype=dtype)
        self.embedding = Parameter(rng.normal(0.0, 0.1, size=(ranges, d)), dtype=dtype)
        self._positions = np.arange(length, dtype=dtype)[:, None]

    def sigma(self) -> Tensor:
        return ops.softplus(self.sigma_raw)

    def weights(self) -> Tensor:
        sigma = self.sigma()
        z = ops.div(ops.sub(self._positions.astype(self.mu.dtype), self.mu), sigma)
        # log N(i; mu, sigma) up to the shared -0.5 log(2 pi); normalising over k is a softmax
        logpdf = ops.sub(ops.mul(ops.square(z), -0.5), ops.log(sigma))
        return ops.softmax(logpdf)

    def encoding(self) -> Tensor:
        return ops.matmul(self.weights(), self.embedding)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-2] != self.length:
            raise ops.ShapeError(f"gaussian_range_encoding: expected {self.length} positions, "
                                 f"got {x.shape}")
        return ops.add(x, self.encoding())


class DenseFFN(Module):
    def __init__(self, d: int, hidden: int, rng, dtype):
        self.fc1 = Linear(d, hidden, rng, dtype)
        self.fc2 = Linear(hidden, d, rng, dtype)

    def __call__(self, x):
        return self.fc2(ops.relu(self.fc1(x)))


class MultiScaleConvFFN(Module):
    """Parallel same-padded convolutions (kernels 1, 3, 5) summed, then relu."""

    def __init__(self, d: int, rng, dtype, kernels=(1, 3, 5)):
        self.convs = [Conv1d(d, d, k, rng, dtype) for k in kernels]

    def __call__(self, x):
        out = self.convs[0](x)
        for conv in self.convs[1:]:
            out = ops.add(out, conv(x))
        return ops.relu(out)


class ConvFFN(Module):
    """Two stacked kernel-3 convolutions with a relu between them."""

    def __init__(self, d: int, hidden: int, rng, dtype):
        self.conv1 = Conv1d(d, hidden, 3, rng, dtype)
        self.conv2 = Conv1d(hidden, d, 3, rng, dtype)

    def __call__(self, x):
        return self.conv2(ops.relu(self.conv1(x)))


FFN_KINDS = ("dense", "multiscale", "conv")


class EncoderBlock(Module):
    """Post-norm block: LN(x + attn(x)) then LN(h + ffn(h))."""

    def __init__(self, d: int, heads: int, ffn_dim: int, ffn_kind: str, dropout: float,
                 rng, dtype, dropout_rng):
        self.attn = MultiHeadAttention(d, heads, rng, dtype)
        self.norm1 = LayerNorm(d, dtype)
        if ffn_kind == "dense":
            self.ffn = DenseFFN(d, ffn_dim, rng, dtype)
        elif ffn_kind == "multiscale":
            self.ffn = MultiScaleConvFFN(d, rng, dtype)
        elif ffn_kind == "conv":
            self.ffn = ConvFFN(d, ffn_dim, rng, dtype)
        else:
            raise ConfigError(f"unknown feed-forward kind {ffn_kind!r}")
        self.norm2 = LayerNorm(d, dtype)
        self.dropout = dropout
        self.dropout_rng = dropout_rng

    def __call__(self, x: Tensor, training: bool = False) -> Tensor:
        a = ops.dropout(self.attn(x), self.dropout, self.dropout_rng, training)
        h = self.norm1(ops.add(x, a))
        f = ops.dropout(self.ffn(h), self.dropout, self.dropout_rng, training)
        return self.norm2(ops.add(h, f))


class EncoderStack(Module):
    """Gaussian range encoding followed by ``blocks`` encoder blocks; shape-preserving."""

    def __init__(self, length: int, d: int, heads: int, ffn_dim: int, blocks: int, ranges: int,
                 ffn_kind: str, dropout: float, rng, dtype, dropout_rng):
        self.gre = GaussianRangeEncoding(length, d, ranges, rng, dtype)
        self.blocks = [EncoderBlock(d, heads, ffn_dim, ffn_kind, dropout, rng, dtype, dropout_rng)
                       for _ in range(blocks)]
        self.length, self.d = length, d

    def __call__(self, x: Tensor, training: bool = False) -> Tensor:
        if tuple(x.shape[-2:]) != (self.length, self.d):
            raise ops.ShapeError(f"encoder_stack: expected (..., {self.length}, {self.d}), "
                                 f"got {x.shape}")
        x = self.gre(x)
        for block in self.blocks:
            x = block(x, training)
        return x


def stack_for(cfg: ModelConfig, ffn_kind: str, rng, dtype, dropout_rng, *,
              channel: bool = False) -> EncoderStack:
    if channel:
        # tokens are the d_model channels, each a vector over the pooled time axis
        return EncoderStack(cfg.d_model, cfg.frontend_out_length, cfg.channel_heads, cfg.ffn_dim,
                            cfg.num_blocks, cfg.gre_ranges, ffn_kind, cfg.dropout, rng, dtype,
                            dropout_rng)
    return EncoderStack(cfg.frontend_out_length, cfg.d_model, cfg.heads, cfg.ffn_dim,
                        cfg.num_blocks, cfg.gre_ranges, ffn_kind, cfg.dropout, rng, dtype,
                        dropout_rng)


class ChannelBranch(Module):
    """(B, T, d) -> transpose to d channel tokens of width T -> encode -> mean -> affine."""

    def __init__(self, cfg: ModelConfig, rng, dtype, dropout_rng):
        self.encoder = stack_for(cfg, "dense", rng, dtype, dropout_rng, channel=True)
        self.proj = Linear(cfg.frontend_out_length, cfg.channel_branch_out, rng, dtype)
        self.last_tokens_shape: tuple[int, ...] = ()

    def __call__(self, x: Tensor, training: bool = False) -> Tensor:
        tokens = ops.swapaxes(x, -1, -2)
        self.last_tokens_shape = tokens.shape
        encoded = self.encoder(tokens, training)
        return self.proj(ops.mean(encoded, axis=-2))


class VanillaEmbedder(Module):
    """front-end -> encoder stack -> GRU final state."""

    def __init__(self, cfg: ModelConfig, rng, dtype, dropout_rng, ffn_kind: str = "dense"):
        self.frontend = CNNFrontend(cfg, rng, dtype)
        self.temporal = stack_for(cfg, ffn_kind, rng, dtype, dropout_rng)
        self.rnn = GRU(cfg.d_model, cfg.rnn_hidden, rng, dtype)
        self.trace: dict[str, tuple[int, ...]] = {}

    def __call__(self, x: Tensor, training: bool = False) -> Tensor:
        f = self.frontend(x)
        h = self.temporal(f, training)
        self.trace = {"frontend": f.shape, "temporal": h.shape}
        return self.rnn(h)


class GaitEmbedder(VanillaEmbedder):
    """Vanilla layout with a convolutional feed-forward sub-block (approximation)."""

    def __init__(self, cfg: ModelConfig, rng, dtype, dropout_rng):
        super().__init__(cfg, rng, dtype, dropout_rng, ffn_kind="conv")


class TemporalChannelEmbedder(Module):
    """Vanilla temporal branch concatenated with the channel branch."""

    def __init__(self, cfg: ModelConfig, rng, dtype, dropout_rng):
        self.frontend = CNNFrontend(cfg, rng, dtype)
        self.temporal = stack_for(cfg, "dense", rng, dtype, dropout_rng)
        self.rnn = GRU(cfg.d_model, cfg.rnn_hidden, rng, dtype)
        self.channel = ChannelBranch(cfg, rng, dtype, dropout_rng)
        self.trace: dict[str, tuple[int, ...]] = {}

    def __call__(self, x: Tensor, training: bool = False) -> Tensor:
        f = self.frontend(x)
        h = self.temporal(f, training)
        t = self.rnn(h)
        c = self.channel(f, training)
        self.trace = {"frontend": f.shape, "temporal": h.shape, "temporal_out": t.shape,
                      "channel_tokens": self.channel.last_tokens_shape, "channel_out": c.shape}
        return ops.concat([t, c], axis=-1)


class THATEmbedder(Module):
    """Two-stream (time tokens, channel tokens) encoder with multi-scale conv blocks.

    Approximates the two-stream activity-recognition transformer at the level
    of detail needed here: each stream is GRE + encoder blocks whose
    feed-forward is a multi-scale convolution, mean-pooled and projected to
    d_model; the two projections are concatenated.
    """

    def __init__(self, cfg: ModelConfig, rng, dtype, dropout_rng):
        self.frontend = CNNFrontend(cfg, rng, dtype)
        self.temporal = stack_for(cfg, "multiscale", rng, dtype, dropout_rng)
        self.channel = stack_for(cfg, "multiscale", rng, dtype, dropout_rng, channel=True)
        self.temporal_proj = Linear(cfg.d_model, cfg.d_model, rng, dtype)
        self.channel_proj = Linear(cfg.frontend_out_length, cfg.d_model, rng, dtype)
        self.trace: dict[str, tuple[int, ...]] = {}

    def __call__(self, x: Tensor, training: bool = False) -> Tensor:
        f = self.frontend(x)
        h = self.temporal(f, training)
        tokens = ops.swapaxes(f, -1, -2)
        c = self.channel(tokens, training)
        self.trace = {"frontend": f.shape, "temporal": h.shape, "channel_tokens": tokens.shape}
        t_vec = self.temporal_proj(ops.mean(h, axis=-2))
        c_vec = self.channel_proj(ops.mean(c, axis=-2))
        return ops.concat([t_vec, c_vec], axis=-1)


EMBEDDERS = {
    "vanilla": VanillaEmbedder,
    "gait": GaitEmbedder,
    "vanilla_tc": TemporalChannelEmbedder,
    "that": THATEmbedder,
}


def build_embedder(cfg: ModelConfig, rng, dtype, dropout_rng) -> Module:
    try:
        cls = EMBEDDERS[cfg.variant]
    except KeyError:
        raise ConfigError(f"unknown variant {cfg.variant!r}") from None
    return cls(cfg, rng, dtype, dropout_rng)
