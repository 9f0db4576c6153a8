"""s2p: desk-scale trainable sketch-to-photo latent diffusion."""

__version__ = "0.1.0"
