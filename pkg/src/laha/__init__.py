"""Label-aware hybrid-attention classifier for large label sets."""

__version__ = "0.1.0"
