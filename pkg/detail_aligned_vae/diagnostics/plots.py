"""Headless PNG plots. Every function writes one file and closes its figure."""

from collections.abc import Mapping, Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import torch  # noqa: E402

from ..training.telemetry import column, ema_smooth, read_telemetry  # noqa: E402
from .spectrum import SpectrumProfile  # noqa: E402

DPI = 120


def _save(fig: plt.Figure, path: str | Path) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(target, dpi=DPI, bbox_inches="tight")
    plt.close(fig)
    return target


def plot_branch_losses(
    telemetry_path: str | Path,
    output: str | Path,
    stage: str = "finetune_dit",
    alpha: float = 0.98,
    compare: str | Path | None = None,
    run_labels: tuple[str, str] = ("run", "comparison"),
) -> Path:
    """Unweighted base and detail DiT losses: raw faint, EMA-smoothed solid.

    With ``compare``, the smoothed curves of a second telemetry file (for
    example a DA-VAE trained without the alignment loss) are overlaid dashed
    and the raw curves are left out.
    """
    runs = [(telemetry_path, "-", run_labels[0])]
    if compare is not None:
        runs.append((compare, "--", run_labels[1]))
    fig, ax = plt.subplots(figsize=(6, 4))
    for path, linestyle, run_label in runs:
        rows = read_telemetry(path)
        for name, color, branch in (
            ("dit_base", "tab:blue", "base latent"),
            ("dit_detail", "tab:orange", "detail latent"),
        ):
            steps, values = column(rows, name, stage)
            if values.size == 0:
                continue
            label = branch
            if compare is None:
                ax.plot(steps, values, color=color, alpha=0.25, linewidth=0.8)
            else:
                label = f"{branch} ({run_label})"
            ax.plot(
                steps,
                ema_smooth(values, alpha),
                color=color,
                linestyle=linestyle,
                label=label,
            )
    ax.set_xlabel("step")
    ax.set_ylabel("unweighted flow loss")
    ax.set_yscale("log")
    ax.legend()
    ax.set_title(stage)
    return _save(fig, output)


def plot_vae_losses(telemetry_path: str | Path, output: str | Path) -> Path:
    rows = read_telemetry(telemetry_path)
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in ("vae_total", "vae_l1", "vae_lpips", "vae_align"):
        steps, values = column(rows, name, "train_davae")
        if values.size:
            ax.plot(steps, ema_smooth(values), label=name.removeprefix("vae_"))
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend()
    return _save(fig, output)


def plot_spectra(profiles: Mapping[str, SpectrumProfile], output: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    for branch, profile in profiles.items():
        power = np.maximum(profile.power, np.finfo(np.float64).tiny)
        ax.plot(profile.radii, power, marker="o", label=branch)
    ax.set_xlabel("radius (cycles per latent grid)")
    ax.set_ylabel("mean power")
    ax.set_yscale("log")
    ax.legend()
    return _save(fig, output)


def plot_embedding(
    points: Sequence[tuple[float, float, int]], output: str | Path
) -> Path:
    coords = np.asarray([(x, y) for x, y, _ in points])
    labels = np.asarray([label for _, _, label in points])
    fig, ax = plt.subplots(figsize=(5, 5))
    scatter = ax.scatter(coords[:, 0], coords[:, 1], c=labels, cmap="tab10", s=12)
    ax.legend(*scatter.legend_elements(), title="class", fontsize="small")
    ax.set_xlabel("PC 1")
    ax.set_ylabel("PC 2")
    return _save(fig, output)


def _to_uint8(image: torch.Tensor) -> np.ndarray:
    array = ((image.detach().cpu().clamp(-1, 1) + 1) * 127.5).round()
    return array.permute(1, 2, 0).numpy().astype(np.uint8)


def plot_image_grid(
    rows: Mapping[str, torch.Tensor], output: str | Path, max_columns: int = 8
) -> Path:
    """One row per named ``(N, 3, H, W)`` batch in ``[-1, 1]``."""
    columns = min(max_columns, max(batch.shape[0] for batch in rows.values()))
    fig, axes = plt.subplots(
        len(rows), columns, figsize=(1.5 * columns, 1.6 * len(rows)), squeeze=False
    )
    for row, (name, batch) in enumerate(rows.items()):
        for col in range(columns):
            ax = axes[row][col]
            ax.axis("off")
            if col < batch.shape[0]:
                ax.imshow(_to_uint8(batch[col]))
        axes[row][0].set_title(name, fontsize="small", loc="left")
    return _save(fig, output)
