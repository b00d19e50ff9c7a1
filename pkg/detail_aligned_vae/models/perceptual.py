"""Perceptual distance over the features of a pluggable extractor.

The default extractor is a small convolutional network with fixed random
weights (a random-feature perceptual distance). Any callable returning a list
of feature maps can be plugged in instead, e.g. a pretrained backbone.
"""

from typing import Protocol

import torch
from torch import nn


class FeatureExtractor(Protocol):
    def __call__(self, image: torch.Tensor) -> list[torch.Tensor]: ...


class RandomFeatureExtractor(nn.Module):
    """Frozen conv net with seeded random weights returning per-stage features."""

    def __init__(
        self,
        widths: tuple[int, ...] = (32, 64, 96),
        seed: int = 0,
    ) -> None:
        super().__init__()
        generator = torch.Generator()
        generator.manual_seed(seed)
        stages = []
        in_channels = 3
        for index, width in enumerate(widths):
            conv = nn.Conv2d(
                in_channels, width, 3, stride=1 if index == 0 else 2, padding=1
            )
            fan_in = in_channels * 9
            with torch.no_grad():
                conv.weight.copy_(
                    torch.randn(conv.weight.shape, generator=generator)
                    / fan_in**0.5
                )
                conv.bias.zero_()
            stages.append(nn.Sequential(conv, nn.LeakyReLU(0.2)))
            in_channels = width
        self.stages = nn.ModuleList(stages)
        for param in self.parameters():
            param.requires_grad_(False)
        self.eval()

    def train(self, mode: bool = True) -> "RandomFeatureExtractor":
        # Always frozen
        return super().train(False)

    def forward(self, image: torch.Tensor) -> list[torch.Tensor]:
        features = []
        x = image
        for stage in self.stages:
            x = stage(x)
            features.append(x)
        return features


def _unit_normalize(features: torch.Tensor, eps: float = 1e-10) -> torch.Tensor:
    norm = torch.sqrt(torch.sum(features**2, dim=1, keepdim=True) + eps)
    return features / norm


def perceptual_distance(
    x: torch.Tensor,
    y: torch.Tensor,
    extractor: FeatureExtractor,
    reduction: str = "mean",
) -> torch.Tensor:
    """LPIPS-style distance: channel-normalized feature differences per stage.

    Returns a scalar for ``reduction="mean"`` and a per-image ``(B,)`` tensor
    for ``reduction="none"``.
    """
    if x.shape != y.shape:
        raise ValueError(f"Shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    batched_x = x if x.dim() == 4 else x.unsqueeze(0)
    batched_y = y if y.dim() == 4 else y.unsqueeze(0)
    per_image = torch.zeros(batched_x.shape[0], dtype=x.dtype, device=x.device)
    features_x = extractor(batched_x)
    features_y = extractor(batched_y)
    for fx, fy in zip(features_x, features_y, strict=True):
        diff = (_unit_normalize(fx) - _unit_normalize(fy)) ** 2
        per_image = per_image + diff.sum(dim=1).mean(dim=(1, 2))
    per_image = per_image / len(features_x)
    if reduction == "none":
        return per_image
    if reduction == "mean":
        return per_image.mean()
    raise ValueError(f"Unknown reduction '{reduction}'")
