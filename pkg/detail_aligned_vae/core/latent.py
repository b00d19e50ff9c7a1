"""Structured latent layout, grouped projection and alignment loss.

A structured latent stacks the base latent of the pretrained VAE (first ``C``
channels) and the detail latent of the high-resolution encoder (next ``D``
channels) over the channel axis. All helpers accept either an unbatched
``(c, h, w)`` tensor or a batched ``(B, c, h, w)`` tensor; the channel axis is
always ``-3``.
"""

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import torch
import torch.nn.functional as F
from einops import reduce

from .errors import LayoutError, ShapeError

CHANNEL_DIM = -3
POSITIVE_INT = {"minimum": 1}


@dataclass(frozen=True)
class LatentLayout:
    """Compression geometry shared by the tokenizer and the diffusion adapter.

    Attributes:
        downsample: Spatial downsample factor f of the base encoder
        patch_size: DiT patch size p
        base_channels: Base latent channels C
        detail_channels: Detail latent channels D, a multiple of C
        scale: Resolution scale s between the high-res and the base image
    """

    downsample: int = field(default=8, metadata=POSITIVE_INT)
    patch_size: int = field(default=1, metadata=POSITIVE_INT)
    base_channels: int = field(default=4, metadata=POSITIVE_INT)
    detail_channels: int = field(default=4, metadata=POSITIVE_INT)
    scale: int = field(default=2, metadata=POSITIVE_INT)

    def __post_init__(self) -> None:
        for name in (
            "downsample",
            "patch_size",
            "base_channels",
            "detail_channels",
            "scale",
        ):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise LayoutError(f"{name} must be a positive integer, got {value!r}")
        if self.detail_channels % self.base_channels != 0:
            raise LayoutError(
                f"detail_channels ({self.detail_channels}) must be a multiple of "
                f"base_channels ({self.base_channels})"
            )

    @property
    def group_size(self) -> int:
        """Number r of detail channels averaged into one base channel."""
        return self.detail_channels // self.base_channels

    @property
    def total_channels(self) -> int:
        return self.base_channels + self.detail_channels

    @property
    def tag(self) -> str:
        """Effective tokenizer tag, e.g. ``f32c128p1`` for f=16, s=2, C+D=128."""
        factor = self.downsample * self.scale
        return f"f{factor}c{self.total_channels}p{self.patch_size}"

    def latent_grid(self, height: int, width: int) -> tuple[int, int]:
        """Latent grid of a base-resolution image."""
        if height % self.downsample or width % self.downsample:
            raise ShapeError(
                f"Base resolution {height}x{width} is not divisible by "
                f"downsample factor {self.downsample}"
            )
        return height // self.downsample, width // self.downsample

    def token_count(self, height: int, width: int) -> int:
        """Number of DiT tokens for a base-resolution image."""
        h, w = self.latent_grid(height, width)
        if h % self.patch_size or w % self.patch_size:
            raise ShapeError(
                f"Latent grid {h}x{w} is not divisible by patch size {self.patch_size}"
            )
        return (h // self.patch_size) * (w // self.patch_size)

    def to_dict(self) -> dict[str, int]:
        return {
            "downsample": self.downsample,
            "patch_size": self.patch_size,
            "base_channels": self.base_channels,
            "detail_channels": self.detail_channels,
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, values: dict[str, Any]) -> "LatentLayout":
        return cls(**values)


@dataclass(frozen=True)
class StructuredLatent:
    """Base and detail latents sharing one spatial grid."""

    base: torch.Tensor
    detail: torch.Tensor

    def __post_init__(self) -> None:
        if self.base.shape[-2:] != self.detail.shape[-2:]:
            raise ShapeError(
                f"Base {tuple(self.base.shape)} and detail "
                f"{tuple(self.detail.shape)} do not share a spatial grid"
            )
        if self.base.shape[:-3] != self.detail.shape[:-3]:
            raise ShapeError(
                f"Base {tuple(self.base.shape)} and detail "
                f"{tuple(self.detail.shape)} have different batch shapes"
            )

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(concat_structured(self.base, self.detail).shape)

    def packed(self) -> torch.Tensor:
        """Channel concatenation, base first."""
        return concat_structured(self.base, self.detail)

    @classmethod
    def unpack(cls, z_hr: torch.Tensor, layout: LatentLayout) -> "StructuredLatent":
        base, detail = split_structured(z_hr, layout)
        return cls(base, detail)


@dataclass(frozen=True)
class LatentBatch:
    """Homogeneous collection of structured latents with optional labels."""

    latents: Sequence[StructuredLatent]
    labels: Sequence[int] | None = None

    def __post_init__(self) -> None:
        if len(self.latents) == 0:
            raise ShapeError("LatentBatch must not be empty")
        first = self.latents[0]
        for index, latent in enumerate(self.latents):
            if (
                latent.base.shape != first.base.shape
                or latent.detail.shape != first.detail.shape
            ):
                raise ShapeError(
                    f"Latent {index} has shapes {tuple(latent.base.shape)}/"
                    f"{tuple(latent.detail.shape)}, expected "
                    f"{tuple(first.base.shape)}/{tuple(first.detail.shape)}"
                )
        if self.labels is not None and len(self.labels) != len(self.latents):
            raise ShapeError(
                f"Got {len(self.labels)} labels for {len(self.latents)} latents"
            )

    def __len__(self) -> int:
        return len(self.latents)

    def stack(self, branch: str) -> torch.Tensor:
        """Stack one branch (``base`` or ``detail``) into an (N, c, h, w) tensor."""
        if branch not in ("base", "detail"):
            raise ValueError(f"Unknown latent branch '{branch}'")
        tensors = [getattr(latent, branch) for latent in self.latents]
        return torch.stack([t.reshape(t.shape[-3:]) for t in tensors])

    @classmethod
    def from_tensors(
        cls,
        base: torch.Tensor,
        detail: torch.Tensor,
        labels: Sequence[int] | torch.Tensor | None = None,
    ) -> "LatentBatch":
        """Split batched (N, C, h, w) / (N, D, h, w) tensors into items."""
        latents = [StructuredLatent(b, d) for b, d in zip(base, detail, strict=True)]
        if isinstance(labels, torch.Tensor):
            labels = [int(label) for label in labels.tolist()]
        return cls(latents, labels)


def _check_rank(tensor: torch.Tensor, name: str) -> None:
    if tensor.dim() not in (3, 4):
        raise ShapeError(
            f"{name} must be (c, h, w) or (B, c, h, w), got {tuple(tensor.shape)}"
        )


def concat_structured(base: torch.Tensor, detail: torch.Tensor) -> torch.Tensor:
    """Pack base and detail latents into ``[z, z_d]`` along channels."""
    _check_rank(base, "base")
    _check_rank(detail, "detail")
    if base.dim() != detail.dim() or base.shape[:-3] != detail.shape[:-3]:
        raise ShapeError(
            f"Base {tuple(base.shape)} and detail {tuple(detail.shape)} "
            "have different batch shapes"
        )
    if base.shape[-2:] != detail.shape[-2:]:
        raise ShapeError(
            f"Spatial mismatch: base is {tuple(base.shape[-2:])}, "
            f"detail is {tuple(detail.shape[-2:])}"
        )
    return torch.cat([base, detail], dim=CHANNEL_DIM)


def split_structured(
    z_hr: torch.Tensor, layout: LatentLayout
) -> tuple[torch.Tensor, torch.Tensor]:
    """Inverse of :func:`concat_structured`."""
    _check_rank(z_hr, "z_hr")
    channels = z_hr.shape[CHANNEL_DIM]
    if channels != layout.total_channels:
        raise ShapeError(
            f"Expected {layout.total_channels} channels "
            f"({layout.base_channels} base + {layout.detail_channels} detail), "
            f"got {channels}"
        )
    base, detail = torch.split(
        z_hr, [layout.base_channels, layout.detail_channels], dim=CHANNEL_DIM
    )
    return base, detail


def grouped_projection(z_d: torch.Tensor, layout: LatentLayout) -> torch.Tensor:
    """Average each run of ``r`` consecutive detail channels into one channel.

    Output channel ``i`` is the mean of detail channels ``[i*r, (i+1)*r)``.
    """
    _check_rank(z_d, "z_d")
    if z_d.shape[CHANNEL_DIM] != layout.detail_channels:
        raise ShapeError(
            f"Expected {layout.detail_channels} detail channels, "
            f"got {z_d.shape[CHANNEL_DIM]}"
        )
    if layout.group_size == 1:
        return z_d
    return reduce(
        z_d, "... (c r) h w -> ... c h w", "mean", r=layout.group_size
    )


def alignment_loss(
    z_d: torch.Tensor, z: torch.Tensor, layout: LatentLayout
) -> torch.Tensor:
    """Mean squared error between the projected detail latent and the base latent."""
    projected = grouped_projection(z_d, layout)
    if projected.shape != z.shape:
        raise ShapeError(
            f"Projected detail latent {tuple(projected.shape)} does not match "
            f"base latent {tuple(z.shape)}"
        )
    return F.mse_loss(projected, z, reduction="mean")
