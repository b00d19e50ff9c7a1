"""Exponential moving average of DiT parameters."""

from collections.abc import Mapping
from dataclasses import dataclass

import torch
from torch import nn

from ..core.errors import ShapeError


@dataclass
class EmaState:
    """Shadow copies of trainable parameters, keyed by parameter name."""

    shadow: dict[str, torch.Tensor]
    decay: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.decay <= 1.0:
            raise ValueError(f"EMA decay must lie in [0, 1], got {self.decay}")

    @classmethod
    def from_module(cls, module: nn.Module, decay: float) -> "EmaState":
        return cls(
            {
                name: param.detach().clone()
                for name, param in module.named_parameters()
                if param.requires_grad
            },
            decay,
        )

    def copy_to(self, module: nn.Module) -> None:
        """Overwrite the module's parameters with the shadow values."""
        params = dict(module.named_parameters())
        with torch.no_grad():
            for name, shadow in self.shadow.items():
                params[name].copy_(shadow)

    def state_dict(self) -> dict[str, torch.Tensor]:
        return {f"ema.{name}": value for name, value in self.shadow.items()}


def _live_tensors(
    live_params: nn.Module | Mapping[str, torch.Tensor],
) -> Mapping[str, torch.Tensor]:
    if isinstance(live_params, nn.Module):
        return dict(live_params.named_parameters())
    return live_params


def ema_update(
    ema: EmaState, live_params: nn.Module | Mapping[str, torch.Tensor]
) -> EmaState:
    """``shadow <- decay * shadow + (1 - decay) * live``, in place.

    Raises:
        ShapeError: If a tracked parameter disappeared or changed shape
    """
    live = _live_tensors(live_params)
    with torch.no_grad():
        for name, shadow in ema.shadow.items():
            if name not in live:
                raise ShapeError(f"EMA parameter '{name}' is missing from the model")
            value = live[name].detach()
            if value.shape != shadow.shape:
                raise ShapeError(
                    f"EMA parameter '{name}' has shape {tuple(shadow.shape)}, "
                    f"live parameter has {tuple(value.shape)}"
                )
            shadow.mul_(ema.decay).add_(value, alpha=1.0 - ema.decay)
    return ema
