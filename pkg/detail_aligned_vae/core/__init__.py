"""Structured latent layout and the shared exception hierarchy."""

from .errors import (
    CheckpointError,
    ConfigError,
    DaVaeError,
    GeometryError,
    LayoutError,
    MissingArtifactError,
    NonFiniteLossError,
    ShapeError,
)
from .latent import (
    LatentBatch,
    LatentLayout,
    StructuredLatent,
    alignment_loss,
    concat_structured,
    grouped_projection,
    split_structured,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "DaVaeError",
    "GeometryError",
    "LatentBatch",
    "LatentLayout",
    "LayoutError",
    "MissingArtifactError",
    "NonFiniteLossError",
    "ShapeError",
    "StructuredLatent",
    "alignment_loss",
    "concat_structured",
    "grouped_projection",
    "split_structured",
]
