from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace

from ..diff.nn import ConfigError

VARIANTS = ("vanilla", "that", "gait", "vanilla_tc")
APPROXIMATE_VARIANTS = ("that", "gait")


def normalize_variant(name: str) -> str:
    v = name.replace("-", "_").lower()
    if v not in VARIANTS:
        raise ConfigError(f"unknown variant {name!r}; choose from {', '.join(VARIANTS)}")
    return v


@dataclass(frozen=True)
class ModelConfig:
    """Encoder variant plus every shape constant and hyperparameter.

    ``frontend_out_length`` must equal ``input_length / 8`` (three pool-2
    stages) and is also the token width of the channel branch, so it must be
    divisible by ``channel_heads``.
    """

    variant: str = "vanilla"
    input_length: int = 2000
    input_channels: int = 23
    frontend_out_length: int = 250
    d_model: int = 64
    conv_kernels: tuple[int, int, int] = (5, 5, 3)
    heads: int = 4
    channel_heads: int = 5
    ffn_dim: int = 128
    num_blocks: int = 2
    gre_ranges: int = 20
    rnn_hidden: int = 92
    channel_branch_out: int = 92
    head_hidden: int = 64
    dropout: float = 0.1
    seed: int = 0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "variant", normalize_variant(self.variant))
        object.__setattr__(self, "conv_kernels", tuple(int(k) for k in self.conv_kernels))
        if len(self.conv_kernels) != 3:
            raise ConfigError("the front-end has exactly three conv blocks")
        if self.input_length % 8 or self.frontend_out_length != self.input_length // 8:
            raise ConfigError(
                f"frontend_out_length {self.frontend_out_length} != input_length/8 "
                f"for input_length {self.input_length}")
        if self.d_model % self.heads:
            raise ConfigError(f"d_model {self.d_model} is not divisible by heads {self.heads}")
        if self.frontend_out_length % self.channel_heads:
            raise ConfigError(
                f"channel token width {self.frontend_out_length} is not divisible by "
                f"channel_heads {self.channel_heads}")
        if self.gre_ranges < 2:
            raise ConfigError("Gaussian range encoding needs at least 2 ranges")
        if self.variant == "vanilla_tc" and self.channel_branch_out != self.rnn_hidden:
            raise ConfigError("vanilla_tc fuses two branches of equal size rnn_hidden")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.variant in APPROXIMATE_VARIANTS:
            self.meta.setdefault("approx", True)

    @property
    def fused_embedding(self) -> int:
        return self.rnn_hidden + self.channel_branch_out

    @property
    def embedding_size(self) -> int:
        return {
            "vanilla": self.rnn_hidden,
            "gait": self.rnn_hidden,
            "vanilla_tc": self.fused_embedding,
            "that": 2 * self.d_model,
        }[self.variant]

    def with_(self, **changes) -> "ModelConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_kernels"] = list(self.conv_kernels)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def reduced(cls, variant: str = "vanilla", **overrides) -> "ModelConfig":
        """Toy dimensions used for full-model gradient checks (128x23 -> 16x8)."""
        base = dict(variant=variant, input_length=128, frontend_out_length=16, d_model=8,
                    heads=2, channel_heads=2, ffn_dim=12, num_blocks=1, gre_ranges=4,
                    rnn_hidden=6, channel_branch_out=6, head_hidden=8, dropout=0.0)
        base.update(overrides)
        return cls(**base)
