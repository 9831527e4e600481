"""Semi-supervised Transformer VAE for aspect-term sentiment analysis."""

__version__ = "0.1.0"
