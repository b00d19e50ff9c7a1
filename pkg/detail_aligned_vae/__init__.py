"""Detail-Aligned VAE - structured-latent tokenizer and warm-start DiT fine-tuning."""

__version__ = "0.1.0"
__author__ = "Detail-Aligned VAE developers"

from . import core, diagnostics, models, training

__all__ = ["__version__", "core", "diagnostics", "models", "training"]
