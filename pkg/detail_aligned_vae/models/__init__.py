"""Tokenizer, losses and the diffusion adapter."""

from .adapter import (
    DiTAdapter,
    EquivalenceReport,
    attach_adapter,
    check_equivalence,
)
from .discriminator import PatchDiscriminator, hinge_d_loss, hinge_g_loss
from .dit import DiTGeometry, ToyDiT, patchify, unpatchify
from .flow import (
    SamplerConfig,
    VelocityTarget,
    WarmupSchedule,
    dit_loss,
    loss_weight,
    make_velocity_target,
    sample,
    sample_latents,
)
from .losses import (
    ReconTerms,
    VaeLossWeights,
    kl_loss,
    vae_reconstruction_loss,
    vae_total_loss,
)
from .perceptual import FeatureExtractor, RandomFeatureExtractor, perceptual_distance
from .tokenizer import (
    BaseAutoencoder,
    GaussianParams,
    VaeModel,
    area_downsample,
    sample_latent,
)

__all__ = [
    "BaseAutoencoder",
    "DiTAdapter",
    "DiTGeometry",
    "EquivalenceReport",
    "FeatureExtractor",
    "GaussianParams",
    "PatchDiscriminator",
    "RandomFeatureExtractor",
    "ReconTerms",
    "SamplerConfig",
    "ToyDiT",
    "VaeLossWeights",
    "VaeModel",
    "VelocityTarget",
    "WarmupSchedule",
    "area_downsample",
    "attach_adapter",
    "check_equivalence",
    "dit_loss",
    "hinge_d_loss",
    "hinge_g_loss",
    "kl_loss",
    "loss_weight",
    "make_velocity_target",
    "patchify",
    "perceptual_distance",
    "sample",
    "sample_latent",
    "sample_latents",
    "unpatchify",
    "vae_reconstruction_loss",
    "vae_total_loss",
]
