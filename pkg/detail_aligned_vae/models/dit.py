"""Toy class-conditional Diffusion Transformer with adaLN-Zero blocks.

The model is split into the three pieces the adapter needs to address
separately: the patch embedder ``P`` (``x_embedder``), the transformer
``backbone`` producing token features, and the output head ``O``
(``final_linear``).
"""

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from einops import rearrange
from timm.models.vision_transformer import Mlp
from torch import nn

from ..core.errors import ShapeError


@dataclass(frozen=True)
class DiTGeometry:
    """Patchify geometry of a DiT: channels, patch size and latent grid."""

    channels: int
    patch_size: int
    grid_h: int
    grid_w: int

    @property
    def token_grid(self) -> tuple[int, int]:
        return self.grid_h // self.patch_size, self.grid_w // self.patch_size

    @property
    def num_tokens(self) -> int:
        th, tw = self.token_grid
        return th * tw


def patchify(x: torch.Tensor, patch_size: int) -> torch.Tensor:
    """(B, c, h, w) -> (B, h/p * w/p, c*p*p)."""
    h, w = x.shape[-2:]
    if h % patch_size or w % patch_size:
        raise ShapeError(
            f"Latent grid {h}x{w} is not divisible by patch size {patch_size}"
        )
    return rearrange(
        x, "b c (h p1) (w p2) -> b (h w) (c p1 p2)", p1=patch_size, p2=patch_size
    )


def unpatchify(
    tokens: torch.Tensor, channels: int, patch_size: int, grid_h: int, grid_w: int
) -> torch.Tensor:
    """(B, N, c*p*p) -> (B, c, h, w); inverse of :func:`patchify`."""
    return rearrange(
        tokens,
        "b (h w) (c p1 p2) -> b c (h p1) (w p2)",
        h=grid_h // patch_size,
        w=grid_w // patch_size,
        c=channels,
        p1=patch_size,
        p2=patch_size,
    )


def sincos_pos_embed_2d(hidden_size: int, grid_h: int, grid_w: int) -> torch.Tensor:
    """Fixed 2D sine-cosine position embedding of shape (grid_h*grid_w, L)."""
    if hidden_size % 4:
        raise ValueError(f"hidden_size must be divisible by 4, got {hidden_size}")
    quarter = hidden_size // 4
    omega = 1.0 / 10000 ** (torch.arange(quarter, dtype=torch.float64) / quarter)
    ys, xs = torch.meshgrid(
        torch.arange(grid_h, dtype=torch.float64),
        torch.arange(grid_w, dtype=torch.float64),
        indexing="ij",
    )
    out_y = ys.reshape(-1, 1) * omega[None]
    out_x = xs.reshape(-1, 1) * omega[None]
    embed = torch.cat(
        [torch.sin(out_y), torch.cos(out_y), torch.sin(out_x), torch.cos(out_x)], dim=1
    )
    return embed.float()


def modulate(x: torch.Tensor, shift: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
    return x * (1 + scale.unsqueeze(1)) + shift.unsqueeze(1)


class TimestepEmbedder(nn.Module):
    """Embeds flow times t in [0, 1] into vectors."""

    def __init__(self, hidden_size: int, frequency_size: int = 256) -> None:
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(frequency_size, hidden_size),
            nn.SiLU(),
            nn.Linear(hidden_size, hidden_size),
        )
        self.frequency_size = frequency_size

    @staticmethod
    def timestep_embedding(
        t: torch.Tensor, dim: int, max_period: float = 10000.0
    ) -> torch.Tensor:
        half = dim // 2
        freqs = torch.exp(
            -math.log(max_period)
            * torch.arange(half, dtype=torch.float32, device=t.device)
            / half
        )
        args = 1000.0 * t[:, None].float() * freqs[None]
        embedding = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
        if dim % 2:
            padding = torch.zeros_like(embedding[:, :1])
            embedding = torch.cat([embedding, padding], dim=-1)
        return embedding

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        embedded: torch.Tensor = self.mlp(
            self.timestep_embedding(t, self.frequency_size)
        )
        return embedded


class LabelEmbedder(nn.Module):
    """Class embedding table with an extra null class for guidance."""

    def __init__(self, num_classes: int, hidden_size: int, with_null: bool) -> None:
        super().__init__()
        self.num_classes = num_classes
        self.with_null = with_null
        self.embedding_table = nn.Embedding(num_classes + int(with_null), hidden_size)

    @property
    def null_id(self) -> int:
        if not self.with_null:
            raise ValueError("Model was built without a null-label embedding")
        return self.num_classes

    def forward(self, labels: torch.Tensor) -> torch.Tensor:
        embedded: torch.Tensor = self.embedding_table(labels)
        return embedded


class Attention(nn.Module):
    def __init__(self, dim: int, num_heads: int) -> None:
        super().__init__()
        if dim % num_heads:
            raise ValueError(f"dim {dim} must be divisible by num_heads {num_heads}")
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        q, k, v = rearrange(
            self.qkv(x), "b n (three h d) -> three b h n d", three=3, h=self.num_heads
        )
        out = F.scaled_dot_product_attention(q, k, v)
        projected: torch.Tensor = self.proj(rearrange(out, "b h n d -> b n (h d)"))
        return projected


class DiTBlock(nn.Module):
    """Transformer block with adaptive layer norm zero conditioning."""

    def __init__(self, hidden_size: int, num_heads: int, mlp_ratio: float = 4.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(hidden_size, elementwise_affine=False, eps=1e-6)
        self.attn = Attention(hidden_size, num_heads)
        self.norm2 = nn.LayerNorm(hidden_size, elementwise_affine=False, eps=1e-6)
        self.mlp = Mlp(
            in_features=hidden_size,
            hidden_features=int(hidden_size * mlp_ratio),
            act_layer=lambda: nn.GELU(approximate="tanh"),
            drop=0,
        )
        self.adaLN_modulation = nn.Sequential(
            nn.SiLU(), nn.Linear(hidden_size, 6 * hidden_size)
        )

    def forward(self, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        shift_msa, scale_msa, gate_msa, shift_mlp, scale_mlp, gate_mlp = (
            self.adaLN_modulation(c).chunk(6, dim=1)
        )
        x = x + gate_msa.unsqueeze(1) * self.attn(
            modulate(self.norm1(x), shift_msa, scale_msa)
        )
        x = x + gate_mlp.unsqueeze(1) * self.mlp(
            modulate(self.norm2(x), shift_mlp, scale_mlp)
        )
        return x


class DiTBackbone(nn.Module):
    """Token features from embedded patches, flow time and class label.

    The final adaLN modulation lives here so that the output heads are plain
    linear maps.
    """

    def __init__(
        self,
        hidden_size: int,
        depth: int,
        num_heads: int,
        token_grid: tuple[int, int],
        num_classes: int,
        with_null: bool,
    ) -> None:
        super().__init__()
        self.hidden_size = hidden_size
        self.token_grid = token_grid
        self.register_buffer(
            "pos_embed", sincos_pos_embed_2d(hidden_size, *token_grid)[None]
        )
        self.t_embedder = TimestepEmbedder(hidden_size)
        self.y_embedder = LabelEmbedder(num_classes, hidden_size, with_null)
        self.blocks = nn.ModuleList(
            [DiTBlock(hidden_size, num_heads) for _ in range(depth)]
        )
        self.norm_final = nn.LayerNorm(hidden_size, elementwise_affine=False, eps=1e-6)
        self.adaLN_final = nn.Sequential(
            nn.SiLU(), nn.Linear(hidden_size, 2 * hidden_size)
        )

    def forward(
        self, tokens: torch.Tensor, t: torch.Tensor, y: torch.Tensor
    ) -> torch.Tensor:
        if tokens.shape[1:] != self.pos_embed.shape[1:]:
            raise ShapeError(
                f"Expected tokens of shape (B, {self.pos_embed.shape[1]}, "
                f"{self.hidden_size}), got {tuple(tokens.shape)}"
            )
        x = tokens + self.pos_embed
        c = self.t_embedder(t) + self.y_embedder(y)
        for block in self.blocks:
            x = block(x, c)
        shift, scale = self.adaLN_final(c).chunk(2, dim=1)
        features: torch.Tensor = modulate(self.norm_final(x), shift, scale)
        return features


class ToyDiT(nn.Module):
    """Base-resolution DiT over the ``C``-channel latent: ``O(backbone(P(z)))``."""

    def __init__(
        self,
        geometry: DiTGeometry,
        hidden_size: int = 256,
        depth: int = 6,
        num_heads: int = 4,
        num_classes: int = 10,
        with_null: bool = True,
    ) -> None:
        super().__init__()
        patch = geometry.patch_size
        if geometry.grid_h % patch or geometry.grid_w % patch:
            raise ShapeError(
                f"Latent grid {geometry.grid_h}x{geometry.grid_w} is not divisible "
                f"by patch size {geometry.patch_size}"
            )
        self.geometry = geometry
        self.num_classes = num_classes
        patch_dim = geometry.channels * geometry.patch_size**2
        self.x_embedder = nn.Linear(patch_dim, hidden_size)
        self.backbone = DiTBackbone(
            hidden_size,
            depth,
            num_heads,
            geometry.token_grid,
            num_classes,
            with_null,
        )
        self.final_linear = nn.Linear(hidden_size, patch_dim)
        self.initialize_weights()

    @property
    def hidden_size(self) -> int:
        return self.backbone.hidden_size

    def initialize_weights(self) -> None:
        """Xavier linears, N(0, 0.02) embeddings, zeroed adaLN and output head."""

        def _basic_init(module: nn.Module) -> None:
            if isinstance(module, nn.Linear):
                nn.init.xavier_uniform_(module.weight)
                if module.bias is not None:
                    nn.init.zeros_(module.bias)

        self.apply(_basic_init)
        nn.init.normal_(self.backbone.y_embedder.embedding_table.weight, std=0.02)
        nn.init.normal_(self.backbone.t_embedder.mlp[0].weight, std=0.02)
        nn.init.normal_(self.backbone.t_embedder.mlp[2].weight, std=0.02)
        for block in self.backbone.blocks:
            nn.init.zeros_(block.adaLN_modulation[-1].weight)
            nn.init.zeros_(block.adaLN_modulation[-1].bias)
        nn.init.zeros_(self.backbone.adaLN_final[-1].weight)
        nn.init.zeros_(self.backbone.adaLN_final[-1].bias)
        nn.init.zeros_(self.final_linear.weight)
        nn.init.zeros_(self.final_linear.bias)

    def forward(
        self, x: torch.Tensor, t: torch.Tensor, y: torch.Tensor
    ) -> torch.Tensor:
        geometry = self.geometry
        if x.shape[1:] != (geometry.channels, geometry.grid_h, geometry.grid_w):
            raise ShapeError(
                f"Expected latents of shape (B, {geometry.channels}, "
                f"{geometry.grid_h}, {geometry.grid_w}), got {tuple(x.shape)}"
            )
        tokens = self.x_embedder(patchify(x, geometry.patch_size))
        features = self.backbone(tokens, t, y)
        return unpatchify(
            self.final_linear(features),
            geometry.channels,
            geometry.patch_size,
            geometry.grid_h,
            geometry.grid_w,
        )
