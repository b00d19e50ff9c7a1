"""Rectified-flow training targets, detail-loss scheduling and guided sampling.

Time runs from ``t = 0`` (pure noise) to ``t = 1`` (data); the interpolant is
``x_t = (1 - t) x0 + t x1`` and the velocity target ``u = x1 - x0``.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import torch

from ..core.errors import NonFiniteLossError, ShapeError
from ..core.latent import StructuredLatent, concat_structured
from .adapter import DiTAdapter
from .tokenizer import Seed, VaeModel, make_generator

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WarmupSchedule:
    """Cosine ramp of the detail-branch loss weight over ``n_warm`` steps.

    ``constant`` pins the weight at 1 (no scheduler ablation).
    """

    n_warm: int
    constant: bool = False

    def __post_init__(self) -> None:
        if self.n_warm <= 0:
            raise ValueError(f"n_warm must be positive, got {self.n_warm}")


def loss_weight(schedule: WarmupSchedule, n: int) -> float:
    """``w(n) = (1 - cos(pi * n / N_warm)) / 2`` below ``N_warm``, then 1."""
    if n < 0:
        raise ValueError(f"Step must be non-negative, got {n}")
    if schedule.constant or n >= schedule.n_warm:
        return 1.0
    return (1.0 - math.cos(math.pi * n / schedule.n_warm)) / 2.0


@dataclass(frozen=True)
class VelocityTarget:
    u: torch.Tensor
    u_d: torch.Tensor

    def __post_init__(self) -> None:
        if self.u.shape[:-3] != self.u_d.shape[:-3] or (
            self.u.shape[-2:] != self.u_d.shape[-2:]
        ):
            raise ShapeError(
                f"Base target {tuple(self.u.shape)} and detail target "
                f"{tuple(self.u_d.shape)} do not share batch and grid"
            )


def _broadcast_time(t: float | torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    t_tensor = torch.as_tensor(t, dtype=like.dtype, device=like.device)
    if bool(((t_tensor < 0) | (t_tensor > 1)).any()):
        raise ValueError(f"Flow time must lie in [0, 1], got {t}")
    if t_tensor.dim() == 1:
        if like.dim() != 4 or t_tensor.shape[0] != like.shape[0]:
            raise ShapeError(
                f"Per-sample times {tuple(t_tensor.shape)} do not match batch "
                f"{tuple(like.shape)}"
            )
        return t_tensor.view(-1, 1, 1, 1)
    return t_tensor


def make_velocity_target(
    x0: StructuredLatent,
    x1: StructuredLatent,
    t: float | torch.Tensor,
) -> tuple[StructuredLatent, VelocityTarget]:
    """Interpolate noise ``x0`` towards data ``x1`` and return the flow target.

    Args:
        x0: Structured noise
        x1: Clean structured latent
        t: Scalar time or one time per batch item, in [0, 1]
    """
    if x0.base.shape != x1.base.shape or x0.detail.shape != x1.detail.shape:
        raise ShapeError(
            f"Noise {x0.shape} and data {x1.shape} latents differ in shape"
        )
    tt = _broadcast_time(t, x1.base)
    x_t = StructuredLatent(
        (1 - tt) * x0.base + tt * x1.base,
        (1 - tt) * x0.detail + tt * x1.detail,
    )
    return x_t, VelocityTarget(x1.base - x0.base, x1.detail - x0.detail)


def dit_loss(
    u_hat: torch.Tensor,
    u_hat_d: torch.Tensor,
    target: VelocityTarget,
    w: float,
    step: int | None = None,
) -> torch.Tensor:
    """``(|u_hat - u|^2 + w |u_hat_d - u_d|^2) / (|B| + w |R|)``.

    ``|B|`` and ``|R|`` are the element counts of the base and detail
    predictions, so ``w = 1`` is a plain MSE over all channels.

    Raises:
        NonFiniteLossError: If the loss is NaN or Inf
    """
    if u_hat.shape != target.u.shape or u_hat_d.shape != target.u_d.shape:
        raise ShapeError(
            f"Predictions {tuple(u_hat.shape)}/{tuple(u_hat_d.shape)} do not "
            f"match targets {tuple(target.u.shape)}/{tuple(target.u_d.shape)}"
        )
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"Loss weight must lie in [0, 1], got {w}")
    base_sq = torch.sum((u_hat - target.u) ** 2)
    detail_sq = torch.sum((u_hat_d - target.u_d) ** 2)
    loss = (base_sq + w * detail_sq) / (u_hat.numel() + w * u_hat_d.numel())
    if not bool(torch.isfinite(loss)):
        raise NonFiniteLossError("dit", step)
    return loss


@dataclass(frozen=True)
class SamplerConfig:
    """Euler sampler settings.

    ``guidance_scale == 1`` disables classifier-free guidance; guidance is
    applied on grid points ``t_i >= cfg_interval_start``.
    """

    steps: int = field(default=250, metadata={"minimum": 1})
    guidance_scale: float = 4.0
    cfg_interval_start: float = field(
        default=0.2, metadata={"minimum": 0.0, "maximum": 1.0}
    )
    timestep_shift: float = field(default=0.3, metadata={"exclusiveMinimum": 0.0})

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if not 0.0 <= self.cfg_interval_start <= 1.0:
            raise ValueError(
                f"cfg_interval_start must lie in [0, 1], got {self.cfg_interval_start}"
            )
        if self.timestep_shift <= 0:
            raise ValueError(
                f"timestep_shift must be positive, got {self.timestep_shift}"
            )

    @property
    def guided(self) -> bool:
        return self.guidance_scale != 1.0


def shift_time(t: torch.Tensor, shift: float) -> torch.Tensor:
    """``t' = shift * t / (1 + (shift - 1) * t)``; fixes 0 and 1."""
    return shift * t / (1 + (shift - 1) * t)


def timestep_grid(cfg: SamplerConfig) -> tuple[torch.Tensor, torch.Tensor]:
    """Uniform grid ``i / steps`` and its shifted counterpart, both float64."""
    uniform = torch.linspace(0.0, 1.0, cfg.steps + 1, dtype=torch.float64)
    return uniform, shift_time(uniform, cfg.timestep_shift)


def guided_velocity(
    adapter: DiTAdapter,
    z: torch.Tensor,
    z_d: torch.Tensor,
    t: torch.Tensor,
    labels: torch.Tensor,
    guidance_scale: float,
) -> tuple[torch.Tensor, torch.Tensor]:
    """``uncond + scale * (cond - uncond)``; scale 1 is the conditional branch."""
    if guidance_scale == 1.0:
        u_hat, u_hat_d = adapter(z, z_d, t, labels)
        return u_hat, u_hat_d
    null = torch.full_like(labels, adapter.null_id)
    u_all, u_d_all = adapter(
        torch.cat([z, z]),
        torch.cat([z_d, z_d]),
        torch.cat([t, t]),
        torch.cat([labels, null]),
    )
    cond, uncond = u_all.chunk(2)
    cond_d, uncond_d = u_d_all.chunk(2)
    return (
        uncond + guidance_scale * (cond - uncond),
        uncond_d + guidance_scale * (cond_d - uncond_d),
    )


@torch.no_grad()
def sample_latents(
    adapter: DiTAdapter,
    labels: Sequence[int] | torch.Tensor,
    cfg: SamplerConfig,
    rng_seed: Seed = None,
) -> StructuredLatent:
    """Integrate the predicted velocity from seeded noise; returns scaled latents.

    Raises:
        ValueError: If guidance is requested but the DiT has no null label
    """
    if cfg.guided and not adapter.backbone.y_embedder.with_null:
        raise ValueError(
            f"guidance_scale={cfg.guidance_scale} requires a null-label "
            "embedding; use guidance_scale=1.0 for unguided sampling"
        )
    geometry = adapter.geometry
    device = adapter.P.weight.device
    labels = torch.as_tensor(labels, dtype=torch.long, device=device).reshape(-1)
    batch = labels.shape[0]
    generator = make_generator(rng_seed)
    noise = torch.randn(
        batch,
        geometry.channels + adapter.detail_channels,
        geometry.grid_h,
        geometry.grid_w,
        generator=generator,
    ).to(device)
    z, z_d = noise.split([geometry.channels, adapter.detail_channels], dim=1)

    uniform, shifted = timestep_grid(cfg)
    was_training = adapter.training
    adapter.eval()
    try:
        for i in range(cfg.steps):
            t_now = float(shifted[i])
            dt = float(shifted[i + 1] - shifted[i])
            scale = (
                cfg.guidance_scale
                if float(uniform[i]) >= cfg.cfg_interval_start
                else 1.0
            )
            t = torch.full((batch,), t_now, device=device)
            u_hat, u_hat_d = guided_velocity(adapter, z, z_d, t, labels, scale)
            z = z + dt * u_hat
            z_d = z_d + dt * u_hat_d
    finally:
        adapter.train(was_training)
    logger.debug("Sampled %d latents with %d Euler steps", batch, cfg.steps)
    return StructuredLatent(z, z_d)


@torch.no_grad()
def sample(
    adapter: DiTAdapter,
    vae: VaeModel,
    labels: Sequence[int] | torch.Tensor,
    cfg: SamplerConfig,
    rng_seed: Seed = None,
    latent_scale: float = 1.0,
) -> torch.Tensor:
    """Generate high-resolution images in ``[-1, 1]`` for ``labels``."""
    latents = sample_latents(adapter, labels, cfg, rng_seed)
    z_hr = concat_structured(latents.base, latents.detail) / latent_scale
    images = vae.decode(z_hr)
    return images.clamp(-1.0, 1.0)
