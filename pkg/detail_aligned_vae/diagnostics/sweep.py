"""Alignment-weight sweep: one short DA-VAE run per ``lambda_align``."""

import logging
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path
from typing import Any

from ..models.perceptual import RandomFeatureExtractor
from ..training.config import TrainConfig
from ..training.data import make_dataset, make_loader
from ..training.telemetry import column, read_telemetry
from ..training.trainer import load_davae, train_davae, write_report
from .metrics import evaluate_reconstruction

logger = logging.getLogger(__name__)

DEFAULT_WEIGHTS = (0.0, 0.1, 0.5, 1.0)


def sweep_align(
    config: TrainConfig,
    run_dir: str | Path,
    weights: Sequence[float] = DEFAULT_WEIGHTS,
    steps: int | None = None,
    max_images: int | None = 64,
) -> dict[str, Any]:
    """Train and evaluate a DA-VAE for each alignment weight.

    Each run lives in ``run_dir/lambda_<weight>``; the summary is written to
    ``run_dir/sweep_align.json``.
    """
    run_dir = Path(run_dir)
    if steps is not None:
        config = replace(config, vae_optim=replace(config.vae_optim, total_steps=steps))
    config = replace(config, stage="train_davae")
    loader = make_loader(
        make_dataset(config.dataset),
        config.vae_optim.batch_size,
        config.seed,
        shuffle=False,
    )
    extractor = RandomFeatureExtractor(seed=config.model.perceptual_seed)

    results = []
    for weight in weights:
        loss = replace(config.loss, lambda_align=float(weight))
        weighted = replace(config, loss=loss)
        result = train_davae(weighted, run_dir / f"lambda_{weight:g}")
        vae, _ = load_davae(result.checkpoints["davae"])
        report = evaluate_reconstruction(
            vae, loader, extractor, max_images=max_images, mode=f"lambda_{weight:g}"
        )
        _, align = column(read_telemetry(result.telemetry), "vae_align", "train_davae")
        results.append(
            {
                "lambda_align": float(weight),
                "psnr": report.mean_psnr,
                "ssim": report.mean_ssim,
                "perceptual_distance": report.mean_perceptual_distance,
                "final_align": float(align[-1]) if align.size else None,
                "checkpoint": str(result.checkpoints["davae"]),
            }
        )
        logger.info("lambda_align=%g: PSNR %.3f dB", weight, report.mean_psnr)
    summary = {"weights": [float(w) for w in weights], "results": results}
    write_report(run_dir / "sweep_align.json", summary)
    return summary
