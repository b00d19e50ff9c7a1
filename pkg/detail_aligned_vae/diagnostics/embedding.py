"""Deterministic 2D embedding of detail latents for class-separability plots."""

import logging
import warnings

import numpy as np
import torch.nn.functional as F

from ..core.errors import ShapeError
from ..core.latent import LatentBatch

logger = logging.getLogger(__name__)

POOLED_GRID = 4
DEGENERATE_RTOL = 1e-10


def pooled_features(latents: LatentBatch, branch: str = "detail") -> np.ndarray:
    """Average-pool each item to at most ``4 x 4`` cells and flatten."""
    maps = latents.stack(branch).detach().cpu().double()
    grid = (min(POOLED_GRID, maps.shape[-2]), min(POOLED_GRID, maps.shape[-1]))
    pooled = F.adaptive_avg_pool2d(maps, grid)
    return pooled.reshape(len(latents), -1).numpy()


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # Largest-magnitude entry of every component is positive
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def principal_axes(features: np.ndarray, k: int = 2) -> np.ndarray | None:
    """Top-``k`` principal axes as columns, or None when the data is degenerate."""
    centered = features - features.mean(axis=0, keepdims=True)
    if centered.shape[1] < k:
        return None
    covariance = centered.T @ centered / max(1, centered.shape[0] - 1)
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    order = np.argsort(eigenvalues, kind="stable")[::-1][:k]
    top = eigenvalues[order]
    if top[0] <= 0 or top[-1] <= DEGENERATE_RTOL * top[0]:
        return None
    return _fix_signs(eigenvectors[:, order])


def latent_embedding_2d(
    latents: LatentBatch, branch: str = "detail"
) -> list[tuple[float, float, int]]:
    """Project pooled latents on their top-2 principal components.

    Falls back to the first two centered feature coordinates, with a warning,
    when the covariance has fewer than two non-vanishing directions.

    Raises:
        ShapeError: If there are fewer than two items
        ValueError: If the batch carries no labels
    """
    if len(latents) < 2:
        raise ShapeError(f"Need at least 2 latents to embed, got {len(latents)}")
    if latents.labels is None:
        raise ValueError("latent_embedding_2d needs labelled latents")
    features = pooled_features(latents, branch)
    axes = principal_axes(features)
    centered = features - features.mean(axis=0, keepdims=True)
    if axes is None:
        warnings.warn(
            "Degenerate latent covariance; using the first two feature coordinates",
            stacklevel=2,
        )
        coords = np.zeros((centered.shape[0], 2))
        width = min(2, centered.shape[1])
        coords[:, :width] = centered[:, :width]
    else:
        coords = centered @ axes
    logger.debug(
        "Embedded %d latents from %d features", len(latents), features.shape[1]
    )
    return [
        (float(x), float(y), int(label))
        for (x, y), label in zip(coords, latents.labels, strict=True)
    ]
