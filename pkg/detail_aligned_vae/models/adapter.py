"""Dual patch embedders and output heads around a pretrained DiT.

The adapted model embeds tokens as ``P(z) + P'(z_d)``, runs the pretrained
backbone and predicts ``u = O(h)`` for the base channels and ``u_d = O'(h)``
for the detail channels. ``P'`` and ``O'`` start at zero, so a freshly
attached adapter predicts exactly what the pretrained model predicts and
nothing for the detail channels.
"""

import copy
import logging
import math
from dataclasses import dataclass

import torch
from torch import nn

from ..core.errors import GeometryError, ShapeError
from ..core.latent import LatentLayout
from .dit import DiTGeometry, ToyDiT, patchify, unpatchify
from .tokenizer import Seed, make_generator

logger = logging.getLogger(__name__)

HEAD_INITS = ("zero", "random")


def _random_init_(linear: nn.Linear, generator: torch.Generator) -> None:
    fan_out, fan_in = linear.weight.shape
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    with torch.no_grad():
        weight = torch.rand(linear.weight.shape, generator=generator) * 2 - 1
        linear.weight.copy_(weight * bound)
        linear.bias.zero_()


class DiTAdapter(nn.Module):
    """Pretrained DiT extended to the ``C + D`` structured latent.

    Attributes:
        P: Pretrained patch embedder over the base channels
        P_prime: Patch embedder over the detail channels
        backbone: Pretrained transformer trunk
        O: Pretrained output head for the base channels
        O_prime: Output head for the detail channels
    """

    def __init__(
        self,
        P: nn.Linear,
        backbone: nn.Module,
        O: nn.Linear,  # noqa: E741
        geometry: DiTGeometry,
        detail_channels: int,
    ) -> None:
        super().__init__()
        hidden_size = P.out_features
        detail_dim = detail_channels * geometry.patch_size**2
        self.P = P
        self.P_prime = nn.Linear(detail_dim, hidden_size)
        self.backbone = backbone
        self.O = O
        self.O_prime = nn.Linear(hidden_size, detail_dim)
        self.geometry = geometry
        self.detail_channels = detail_channels
        self.zero_init_heads()

    def zero_init_heads(self) -> None:
        for linear in (self.P_prime, self.O_prime):
            nn.init.zeros_(linear.weight)
            nn.init.zeros_(linear.bias)

    @property
    def null_id(self) -> int:
        null_id: int = self.backbone.y_embedder.null_id
        return null_id

    @property
    def hidden_size(self) -> int:
        return self.P.out_features

    def _check_grid(self, tensor: torch.Tensor, channels: int, name: str) -> None:
        geometry = self.geometry
        expected = (channels, geometry.grid_h, geometry.grid_w)
        if tensor.dim() != 4 or tuple(tensor.shape[1:]) != expected:
            raise ShapeError(
                f"Expected {name} of shape (B, {channels}, {geometry.grid_h}, "
                f"{geometry.grid_w}), got {tuple(tensor.shape)}"
            )

    def embed_tokens(self, z: torch.Tensor, z_d: torch.Tensor) -> torch.Tensor:
        """``P(z) + P'(z_d)`` as a row-major (B, h/p * w/p, L) token sequence."""
        self._check_grid(z, self.geometry.channels, "z")
        self._check_grid(z_d, self.detail_channels, "z_d")
        patch_size = self.geometry.patch_size
        tokens: torch.Tensor = self.P(patchify(z, patch_size)) + self.P_prime(
            patchify(z_d, patch_size)
        )
        return tokens

    def decode_outputs(
        self, features: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Unpatchified ``(O(h), O'(h))``."""
        geometry = self.geometry
        if features.dim() != 3 or tuple(features.shape[1:]) != (
            geometry.num_tokens,
            self.hidden_size,
        ):
            raise ShapeError(
                f"Expected features of shape (B, {geometry.num_tokens}, "
                f"{self.hidden_size}), got {tuple(features.shape)}"
            )
        u_hat = unpatchify(
            self.O(features),
            geometry.channels,
            geometry.patch_size,
            geometry.grid_h,
            geometry.grid_w,
        )
        u_hat_d = unpatchify(
            self.O_prime(features),
            self.detail_channels,
            geometry.patch_size,
            geometry.grid_h,
            geometry.grid_w,
        )
        return u_hat, u_hat_d

    def forward(
        self, z: torch.Tensor, z_d: torch.Tensor, t: torch.Tensor, y: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        features = self.backbone(self.embed_tokens(z, z_d), t, y)
        return self.decode_outputs(features)


def attach_adapter(
    pretrained_dit: ToyDiT,
    layout: LatentLayout,
    init: str = "zero",
    latent_grid: tuple[int, int] | None = None,
    rng_seed: Seed = None,
) -> DiTAdapter:
    """Copy ``P``, backbone and ``O`` from ``pretrained_dit`` and add fresh heads.

    Args:
        pretrained_dit: Base-resolution DiT; left untouched
        layout: Structured latent layout the adapter must serve
        init: ``zero`` for the warm start, ``random`` for the ablation
        latent_grid: Expected latent grid, checked against the DiT when given
        rng_seed: Seed of the ``random`` head initialization

    Raises:
        GeometryError: If the DiT's channels, patch size or grid differ
    """
    if init not in HEAD_INITS:
        raise ValueError(f"init must be one of {HEAD_INITS}, got '{init}'")
    geometry = pretrained_dit.geometry
    expected_grid = latent_grid or (geometry.grid_h, geometry.grid_w)
    expected = DiTGeometry(
        layout.base_channels, layout.patch_size, expected_grid[0], expected_grid[1]
    )
    if geometry != expected:
        raise GeometryError(
            f"Pretrained DiT geometry {geometry} does not match layout "
            f"geometry {expected}"
        )

    adapter = DiTAdapter(
        copy.deepcopy(pretrained_dit.x_embedder),
        copy.deepcopy(pretrained_dit.backbone),
        copy.deepcopy(pretrained_dit.final_linear),
        geometry,
        layout.detail_channels,
    )
    if init == "random":
        generator = make_generator(rng_seed)
        _random_init_(adapter.P_prime, generator)
        _random_init_(adapter.O_prime, generator)
    logger.info(
        "Attached %s-initialized detail heads for %d detail channels",
        init,
        layout.detail_channels,
    )
    return adapter


@dataclass(frozen=True)
class EquivalenceReport:
    """Adapted model against its source DiT on random inputs."""

    pairs: int
    max_abs_base_diff: float
    max_abs_detail: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_abs_base_diff <= self.tolerance and self.max_abs_detail == 0.0

    def to_dict(self) -> dict[str, float | int | bool]:
        return {
            "pairs": self.pairs,
            "max_abs_base_diff": self.max_abs_base_diff,
            "max_abs_detail": self.max_abs_detail,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


@torch.no_grad()
def check_equivalence(
    adapter: DiTAdapter,
    pretrained_dit: ToyDiT,
    pairs: int = 32,
    rng_seed: Seed = 0,
    tolerance: float = 1e-6,
) -> EquivalenceReport:
    """Compare base predictions on ``pairs`` random ``(z, z_d, t, y)`` draws."""
    generator = make_generator(rng_seed)
    geometry = adapter.geometry
    device = adapter.P.weight.device
    num_classes = pretrained_dit.num_classes
    base_diff = 0.0
    detail_max = 0.0
    for _ in range(pairs):
        z = torch.randn(
            1, geometry.channels, geometry.grid_h, geometry.grid_w, generator=generator
        ).to(device)
        z_d = torch.randn(
            1,
            adapter.detail_channels,
            geometry.grid_h,
            geometry.grid_w,
            generator=generator,
        ).to(device)
        t = torch.rand(1, generator=generator).to(device)
        y = torch.randint(0, num_classes, (1,), generator=generator).to(device)
        u_hat, u_hat_d = adapter(z, z_d, t, y)
        reference = pretrained_dit(z, t, y)
        base_diff = max(base_diff, float((u_hat - reference).abs().max()))
        detail_max = max(detail_max, float(u_hat_d.abs().max()))
    return EquivalenceReport(pairs, base_diff, detail_max, tolerance)
