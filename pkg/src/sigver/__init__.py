"""On-line signature verification with Siamese CNN + Transformer encoders."""

__version__ = "0.1.0"
