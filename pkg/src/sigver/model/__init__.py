"""Siamese CNN + Transformer encoders in four configurations."""

from .config import VARIANTS, ModelConfig, normalize_variant
from .encoders import CNNFrontend, ChannelBranch, EncoderStack, GaussianRangeEncoding
from .siamese import SiameseHead, SiameseModel

__all__ = [
    "VARIANTS", "CNNFrontend", "ChannelBranch", "EncoderStack", "GaussianRangeEncoding",
    "ModelConfig", "SiameseHead", "SiameseModel", "normalize_variant",
]
