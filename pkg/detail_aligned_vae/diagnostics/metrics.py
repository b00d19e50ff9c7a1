"""Reconstruction metrics: PSNR, SSIM and perceptual distance over a dataset."""

import logging
import math
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import torch
from torchmetrics.functional.image import structural_similarity_index_measure

from ..core.errors import ShapeError
from ..core.latent import StructuredLatent
from ..models.perceptual import (
    FeatureExtractor,
    RandomFeatureExtractor,
    perceptual_distance,
)
from ..models.tokenizer import VaeModel
from ..training.data import split_resolutions

logger = logging.getLogger(__name__)

PSNR_CAP = 99.0
DATA_RANGE = 2.0
SSIM_WINDOW = 7

DetailFn = Callable[[StructuredLatent, int], StructuredLatent]


def _check_pair(x: torch.Tensor, y: torch.Tensor) -> None:
    if x.shape != y.shape:
        raise ShapeError(f"Shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")


def psnr(
    x: torch.Tensor,
    y: torch.Tensor,
    data_range: float = DATA_RANGE,
    cap: float = PSNR_CAP,
) -> float:
    """``10 log10(range^2 / MSE)`` in dB, ``cap`` for identical inputs."""
    _check_pair(x, y)
    mse = float(torch.mean((x.double() - y.double()) ** 2))
    if mse == 0.0:
        return cap
    return min(cap, 10.0 * math.log10(data_range**2 / mse))


def ssim(
    x: torch.Tensor,
    y: torch.Tensor,
    window: int = SSIM_WINDOW,
    data_range: float = DATA_RANGE,
) -> float:
    """Mean SSIM with a uniform ``window x window`` filter.

    Raises:
        ShapeError: If the image is smaller than the window
    """
    _check_pair(x, y)
    if min(x.shape[-2:]) < window:
        raise ShapeError(
            f"Image {tuple(x.shape[-2:])} is smaller than the SSIM window {window}"
        )
    batched_x = x if x.dim() == 4 else x.unsqueeze(0)
    batched_y = y if y.dim() == 4 else y.unsqueeze(0)
    value = structural_similarity_index_measure(
        batched_x.double(),
        batched_y.double(),
        gaussian_kernel=False,
        kernel_size=window,
        data_range=data_range,
    )
    return float(value)


@dataclass
class ReconReport:
    """Per-image metrics and their means.

    ``fid`` stays ``None`` unless a Frechet distance was computed with a
    user-supplied feature extractor.
    """

    psnr: list[float] = field(default_factory=list)
    ssim: list[float] = field(default_factory=list)
    perceptual_distance: list[float] = field(default_factory=list)
    mode: str = "full"
    fid: float | None = None
    warnings: list[str] = field(default_factory=list)

    def add(self, psnr_db: float, ssim_value: float, distance: float) -> None:
        self.psnr.append(psnr_db)
        self.ssim.append(ssim_value)
        self.perceptual_distance.append(distance)

    def __len__(self) -> int:
        return len(self.psnr)

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr)) if self.psnr else float("nan")

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim)) if self.ssim else float("nan")

    @property
    def mean_perceptual_distance(self) -> float:
        if not self.perceptual_distance:
            return float("nan")
        return float(np.mean(self.perceptual_distance))

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "num_images": len(self),
            "aggregate": {
                "psnr": self.mean_psnr,
                "ssim": self.mean_ssim,
                "perceptual_distance": self.mean_perceptual_distance,
                "fid": self.fid,
            },
            "per_image": {
                "psnr": self.psnr,
                "ssim": self.ssim,
                "perceptual_distance": self.perceptual_distance,
            },
            "warnings": self.warnings,
        }


def score_images(
    reference: torch.Tensor,
    reconstruction: torch.Tensor,
    report: ReconReport,
    extractor: FeatureExtractor,
) -> None:
    """Append per-image metrics for a batch, in batch order."""
    _check_pair(reference, reconstruction)
    distances = perceptual_distance(
        reference, reconstruction, extractor, reduction="none"
    )
    for index in range(reference.shape[0]):
        report.add(
            psnr(reference[index], reconstruction[index]),
            ssim(reference[index], reconstruction[index]),
            float(distances[index]),
        )


@torch.no_grad()
def evaluate_reconstruction(
    vae: VaeModel,
    batches: Iterable[tuple[torch.Tensor, Any]],
    extractor: FeatureExtractor | None = None,
    detail_fn: DetailFn | None = None,
    max_images: int | None = None,
    mode: str = "full",
) -> ReconReport:
    """Encode to posterior means, optionally replace the latent, decode and score.

    Args:
        vae: Trained DA-VAE
        batches: ``(high-res images, labels)`` batches in ``[-1, 1]``
        extractor: Perceptual feature extractor; a seeded random one by default
        detail_fn: Maps ``(latent, batch_index)`` to the latent to decode
        max_images: Stop after this many images
        mode: Label stored in the report
    """
    extractor = extractor or RandomFeatureExtractor()
    device = next(vae.parameters()).device
    if isinstance(extractor, torch.nn.Module):
        extractor = extractor.to(device)
    was_training = vae.training
    vae.eval()
    report = ReconReport(mode=mode)
    try:
        for batch_index, (images_hr, _) in enumerate(batches):
            if max_images is not None and len(report) >= max_images:
                break
            images_hr = images_hr.to(device)
            if max_images is not None:
                images_hr = images_hr[: max_images - len(report)]
            image_base, image_hr = split_resolutions(images_hr, vae.layout.scale)
            latent = vae.encode_mean(image_base, image_hr)
            if detail_fn is not None:
                latent = detail_fn(latent, batch_index)
            reconstruction = vae.decode(latent).clamp(-1.0, 1.0)
            score_images(image_hr, reconstruction, report, extractor)
    finally:
        vae.train(was_training)
    logger.info(
        "%s: %d images, PSNR %.3f dB, SSIM %.4f",
        mode,
        len(report),
        report.mean_psnr,
        report.mean_ssim,
    )
    return report
