"""VAE objective: reconstruction terms, KL regularization and alignment."""

from collections.abc import Iterable
from dataclasses import asdict, dataclass, field

import torch
import torch.nn.functional as F

from ..core.errors import NonFiniteLossError
from ..core.latent import LatentLayout, alignment_loss
from .discriminator import hinge_g_loss
from .perceptual import FeatureExtractor, perceptual_distance
from .tokenizer import GaussianParams

NON_NEGATIVE = {"minimum": 0.0}


@dataclass(frozen=True)
class VaeLossWeights:
    """Weights of the perceptual, L1, adversarial, KL and alignment terms."""

    lambda_lpips: float = field(default=1.0, metadata=NON_NEGATIVE)
    lambda_l1: float = field(default=1.0, metadata=NON_NEGATIVE)
    lambda_adv: float = field(default=0.0, metadata=NON_NEGATIVE)
    lambda_kl: float = field(default=1e-6, metadata=NON_NEGATIVE)
    lambda_align: float = field(default=0.5, metadata=NON_NEGATIVE)

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if value < 0:
                raise ValueError(f"{name} must be non-negative, got {value}")


@dataclass(frozen=True)
class ReconTerms:
    """Weighted reconstruction loss plus each unweighted term for telemetry."""

    total: torch.Tensor
    lpips: torch.Tensor
    l1: torch.Tensor
    adv: torch.Tensor
    kl: torch.Tensor

    def as_floats(self) -> dict[str, float]:
        return {
            "rec": float(self.total.detach()),
            "lpips": float(self.lpips.detach()),
            "l1": float(self.l1.detach()),
            "adv": float(self.adv.detach()),
            "kl": float(self.kl.detach()),
        }


def check_finite(term: str, value: torch.Tensor, step: int | None = None) -> None:
    if not bool(torch.isfinite(value).all()):
        raise NonFiniteLossError(term, step)


def kl_loss(params: GaussianParams) -> torch.Tensor:
    """KL divergence to N(0, I), averaged over elements."""
    return 0.5 * torch.mean(
        params.mean**2 + torch.exp(params.logvar) - 1.0 - params.logvar
    )


def vae_reconstruction_loss(
    x_hr: torch.Tensor,
    x_rec: torch.Tensor,
    weights: VaeLossWeights,
    perceptual_extractor: FeatureExtractor | None,
    discriminator: torch.nn.Module | None = None,
    posteriors: Iterable[GaussianParams] = (),
) -> ReconTerms:
    """``lambda_L*LPIPS + lambda_1*L1 + lambda_adv*L_adv + lambda_KL*L_KL``.

    ``posteriors`` are the trainable posteriors the KL term regularizes; the
    frozen base posterior is constant and left out.
    """
    if x_hr.shape != x_rec.shape:
        raise ValueError(
            f"Reconstruction {tuple(x_rec.shape)} does not match target "
            f"{tuple(x_hr.shape)}"
        )
    zero = x_rec.new_zeros(())
    l1 = F.l1_loss(x_rec, x_hr)

    lpips = zero
    if weights.lambda_lpips > 0:
        if perceptual_extractor is None:
            raise ValueError("lambda_lpips > 0 requires a perceptual extractor")
        lpips = perceptual_distance(x_rec, x_hr, perceptual_extractor)

    adv = zero
    if weights.lambda_adv > 0:
        if discriminator is None:
            raise ValueError("lambda_adv > 0 requires a discriminator")
        adv = hinge_g_loss(discriminator(x_rec))

    kl = zero
    posteriors = list(posteriors)
    if posteriors:
        kl = torch.stack([kl_loss(p) for p in posteriors]).mean()

    total = (
        weights.lambda_lpips * lpips
        + weights.lambda_l1 * l1
        + weights.lambda_adv * adv
        + weights.lambda_kl * kl
    )
    return ReconTerms(total=total, lpips=lpips, l1=l1, adv=adv, kl=kl)


def vae_total_loss(
    recon_terms: ReconTerms,
    z: torch.Tensor,
    z_d: torch.Tensor,
    weights: VaeLossWeights,
    layout: LatentLayout,
    step: int | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """``L = L_rec + lambda_align * L_align``; returns (total, alignment term).

    Raises:
        NonFiniteLossError: If any term is NaN or Inf
    """
    align = alignment_loss(z_d, z, layout)
    for name, value in (
        ("lpips", recon_terms.lpips),
        ("l1", recon_terms.l1),
        ("adv", recon_terms.adv),
        ("kl", recon_terms.kl),
        ("align", align),
    ):
        check_finite(name, value, step)
    if weights.lambda_align == 0:
        return recon_terms.total, align
    return recon_terms.total + weights.lambda_align * align, align
