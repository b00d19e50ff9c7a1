"""DA-VAE tokenizer: frozen base encoder, detail encoder and joint decoder.

The base encoder maps a base-resolution image ``3 x H x W`` to a ``C``-channel
latent on the ``H/f x W/f`` grid. The detail encoder sees the high-resolution
image ``3 x sH x sW`` and lands on the same grid through an extra strided
downsampling head. The decoder concatenates both latents, undoes the extra
``s`` factor with a pixel-shuffle head and reconstructs the high-resolution
image.
"""

import logging
import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from ..core.errors import LayoutError, ShapeError
from ..core.latent import LatentLayout, StructuredLatent, concat_structured

logger = logging.getLogger(__name__)

LOGVAR_MIN = -30.0
LOGVAR_MAX = 20.0

Seed = int | torch.Generator | None


@dataclass(frozen=True)
class GaussianParams:
    """Diagonal Gaussian posterior over a latent grid; logvar is clamped."""

    mean: torch.Tensor
    logvar: torch.Tensor

    def __post_init__(self) -> None:
        if self.mean.shape != self.logvar.shape:
            raise ShapeError(
                f"mean {tuple(self.mean.shape)} and logvar "
                f"{tuple(self.logvar.shape)} differ"
            )
        object.__setattr__(
            self, "logvar", torch.clamp(self.logvar, LOGVAR_MIN, LOGVAR_MAX)
        )

    @classmethod
    def from_moments(cls, moments: torch.Tensor) -> "GaussianParams":
        mean, logvar = torch.chunk(moments, 2, dim=-3)
        return cls(mean, logvar)

    @property
    def std(self) -> torch.Tensor:
        return torch.exp(0.5 * self.logvar)

    @property
    def channels(self) -> int:
        return int(self.mean.shape[-3])


def make_generator(seed: Seed) -> torch.Generator:
    """Turn a seed (or an existing generator) into a CPU generator."""
    if isinstance(seed, torch.Generator):
        return seed
    generator = torch.Generator()
    generator.manual_seed(0 if seed is None else int(seed))
    return generator


def sample_latent(params: GaussianParams, rng_seed: Seed = None) -> torch.Tensor:
    """Reparameterized draw ``mean + exp(logvar/2) * eps`` from a seeded stream.

    Noise is drawn on the CPU so that a given seed produces the same sample on
    every device.
    """
    generator = make_generator(rng_seed)
    eps = torch.randn(
        params.mean.shape, generator=generator, dtype=params.mean.dtype
    ).to(params.mean.device)
    return params.mean + params.std * eps


def area_downsample(image_hr: torch.Tensor, scale: int) -> torch.Tensor:
    """Base image derivation: average pooling by the resolution scale factor."""
    if image_hr.shape[-1] % scale or image_hr.shape[-2] % scale:
        raise ShapeError(
            f"Image {tuple(image_hr.shape[-2:])} is not divisible by scale {scale}"
        )
    batched = image_hr if image_hr.dim() == 4 else image_hr.unsqueeze(0)
    pooled = F.avg_pool2d(batched, kernel_size=scale, stride=scale)
    return pooled if image_hr.dim() == 4 else pooled.squeeze(0)


def _num_stages(factor: int, name: str) -> int:
    stages = int(round(math.log2(factor)))
    if 2**stages != factor:
        raise LayoutError(f"{name} must be a power of two, got {factor}")
    return stages


def _norm(channels: int) -> nn.GroupNorm:
    groups = math.gcd(channels, 8)
    return nn.GroupNorm(groups, channels, eps=1e-6)


class ResnetBlock(nn.Module):
    def __init__(self, channels: int) -> None:
        super().__init__()
        self.norm1 = _norm(channels)
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm2 = _norm(channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = self.conv2(F.silu(self.norm2(h)))
        return x + h


class Downsample(nn.Module):
    """Strided 3x3 conv halving the spatial resolution."""

    def __init__(self, channels: int) -> None:
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, 3, stride=2, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(x)


class Upsample(nn.Module):
    def __init__(self, channels: int) -> None:
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(F.interpolate(x, scale_factor=2.0, mode="nearest"))


class EncoderBackbone(nn.Module):
    """Conv stem followed by ``num_down`` residual downsampling stages."""

    def __init__(self, in_channels: int, width: int, num_down: int) -> None:
        super().__init__()
        self.stem = nn.Conv2d(in_channels, width, 3, padding=1)
        stages: list[nn.Module] = []
        for _ in range(num_down):
            stages += [ResnetBlock(width), Downsample(width)]
        stages.append(ResnetBlock(width))
        self.stages = nn.Sequential(*stages)
        self.norm_out = _norm(width)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.silu(self.norm_out(self.stages(self.stem(x))))


class DecoderBackbone(nn.Module):
    """Residual upsampling stages from the feature map back to RGB."""

    def __init__(self, width: int, num_up: int, out_channels: int = 3) -> None:
        super().__init__()
        stages: list[nn.Module] = [ResnetBlock(width)]
        for _ in range(num_up):
            stages += [Upsample(width), ResnetBlock(width)]
        self.stages = nn.Sequential(*stages)
        self.norm_out = _norm(width)
        self.conv_out = nn.Conv2d(width, out_channels, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv_out(F.silu(self.norm_out(self.stages(x))))


class GaussianEncoder(nn.Module):
    """Image -> GaussianParams over ``latent_channels`` on the ``1/f`` grid.

    ``extra_down`` strided conv blocks are appended after the backbone
    (keeping the channel width) so a higher-resolution input lands on the same
    latent grid.
    """

    def __init__(
        self,
        latent_channels: int,
        width: int,
        num_down: int,
        extra_down: int = 0,
    ) -> None:
        super().__init__()
        self.backbone = EncoderBackbone(3, width, num_down)
        head: list[nn.Module] = []
        for _ in range(extra_down):
            head += [Downsample(width), nn.SiLU()]
        self.down_head = nn.Sequential(*head)
        self.to_moments = nn.Conv2d(width, 2 * latent_channels, 3, padding=1)

    def forward(self, image: torch.Tensor) -> GaussianParams:
        batched = image if image.dim() == 4 else image.unsqueeze(0)
        moments = self.to_moments(self.down_head(self.backbone(batched)))
        if image.dim() == 3:
            moments = moments.squeeze(0)
        return GaussianParams.from_moments(moments)


class PixelShuffleHead(nn.Module):
    """Channel-to-space rearrangement by ``scale``, then a 3x3 conv to ``width``."""

    def __init__(self, in_channels: int, width: int, scale: int) -> None:
        super().__init__()
        if in_channels % (scale * scale):
            raise LayoutError(
                f"Latent channels ({in_channels}) must be divisible by scale^2 "
                f"({scale * scale}) for the pixel-shuffle head"
            )
        self.shuffle = nn.PixelShuffle(scale) if scale > 1 else nn.Identity()
        self.conv = nn.Conv2d(in_channels // (scale * scale), width, 3, padding=1)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return self.conv(self.shuffle(z))


class BaseAutoencoder(nn.Module):
    """Conventional VAE at base resolution; its encoder becomes the frozen E."""

    def __init__(self, layout: LatentLayout, width: int = 64) -> None:
        super().__init__()
        self.layout = layout
        num_down = _num_stages(layout.downsample, "downsample")
        self.encoder = GaussianEncoder(layout.base_channels, width, num_down)
        self.decoder = nn.Sequential(
            nn.Conv2d(layout.base_channels, width, 3, padding=1),
            DecoderBackbone(width, num_down),
        )

    def encode(self, image: torch.Tensor) -> GaussianParams:
        layout = self.layout
        layout.latent_grid(image.shape[-2], image.shape[-1])
        params: GaussianParams = self.encoder(image)
        return params

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        batched = z if z.dim() == 4 else z.unsqueeze(0)
        output: torch.Tensor = self.decoder(batched)
        return output if z.dim() == 4 else output.squeeze(0)


class VaeModel(nn.Module):
    """Frozen base encoder ``E``, detail encoder ``E_d`` and joint decoder ``Dec``."""

    def __init__(
        self,
        layout: LatentLayout,
        width: int = 64,
        base_encoder: GaussianEncoder | None = None,
    ) -> None:
        super().__init__()
        self.layout = layout
        num_down = _num_stages(layout.downsample, "downsample")
        extra_down = _num_stages(layout.scale, "scale")
        self.base_encoder = base_encoder or GaussianEncoder(
            layout.base_channels, width, num_down
        )
        self.detail_encoder = GaussianEncoder(
            layout.detail_channels, width, num_down, extra_down=extra_down
        )
        self.decoder = nn.Sequential(
            PixelShuffleHead(layout.total_channels, width, layout.scale),
            DecoderBackbone(width, num_down),
        )
        self.trained_steps = 0
        self.freeze_base()

    def freeze_base(self) -> None:
        for param in self.base_encoder.parameters():
            param.requires_grad_(False)
        self.base_encoder.eval()

    def train(self, mode: bool = True) -> "VaeModel":
        super().train(mode)
        self.base_encoder.eval()
        return self

    def trainable_parameters(self) -> list[nn.Parameter]:
        return [p for p in self.parameters() if p.requires_grad]

    def encode_base(self, image_base: torch.Tensor) -> GaussianParams:
        """``z = E(I)``; no gradient reaches the frozen encoder."""
        if image_base.shape[-3] != 3:
            raise ShapeError(f"Expected an RGB image, got {tuple(image_base.shape)}")
        self.layout.latent_grid(image_base.shape[-2], image_base.shape[-1])
        with torch.no_grad():
            params: GaussianParams = self.base_encoder(image_base)
        return params

    def encode_detail(self, image_hr: torch.Tensor) -> GaussianParams:
        """``z_d = E_d(I_hr)`` with an effective downsample of ``s * f``."""
        if image_hr.shape[-3] != 3:
            raise ShapeError(f"Expected an RGB image, got {tuple(image_hr.shape)}")
        factor = self.layout.downsample * self.layout.scale
        if image_hr.shape[-2] % factor or image_hr.shape[-1] % factor:
            raise ShapeError(
                f"High-res image {tuple(image_hr.shape[-2:])} is not divisible by "
                f"s*f = {factor}"
            )
        params: GaussianParams = self.detail_encoder(image_hr)
        return params

    def encode_params(
        self, image_base: torch.Tensor, image_hr: torch.Tensor
    ) -> tuple[GaussianParams, GaussianParams]:
        scale = self.layout.scale
        expected = (image_base.shape[-2] * scale, image_base.shape[-1] * scale)
        if tuple(image_hr.shape[-2:]) != expected:
            raise ShapeError(
                f"High-res image {tuple(image_hr.shape[-2:])} must be exactly "
                f"{scale}x the base image {tuple(image_base.shape[-2:])}"
            )
        return self.encode_base(image_base), self.encode_detail(image_hr)

    def encode(
        self,
        image_base: torch.Tensor,
        image_hr: torch.Tensor,
        rng_seed: Seed = None,
    ) -> StructuredLatent:
        """Sample both posteriors from one seeded stream, base first."""
        base_params, detail_params = self.encode_params(image_base, image_hr)
        generator = make_generator(rng_seed)
        base = sample_latent(base_params, generator)
        detail = sample_latent(detail_params, generator)
        return StructuredLatent(base, detail)

    def encode_mean(
        self, image_base: torch.Tensor, image_hr: torch.Tensor
    ) -> StructuredLatent:
        """Posterior means; used at evaluation time."""
        base_params, detail_params = self.encode_params(image_base, image_hr)
        return StructuredLatent(base_params.mean, detail_params.mean)

    def decode(self, z_hr: StructuredLatent | torch.Tensor) -> torch.Tensor:
        """``Dec(z_hr)`` reconstructs the high-resolution image."""
        if isinstance(z_hr, StructuredLatent):
            z_hr = concat_structured(z_hr.base, z_hr.detail)
        if z_hr.shape[-3] != self.layout.total_channels:
            raise ShapeError(
                f"Expected {self.layout.total_channels} latent channels, "
                f"got {tuple(z_hr.shape)}"
            )
        batched = z_hr if z_hr.dim() == 4 else z_hr.unsqueeze(0)
        image: torch.Tensor = self.decoder(batched)
        return image if z_hr.dim() == 4 else image.squeeze(0)
