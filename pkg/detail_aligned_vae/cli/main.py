"""Command-line entry point for the DA-VAE pipeline.

Each invocation creates a new timestamped run directory under the run root
(``$DAVAE_RUN_ROOT`` or ``./runs``) once its inputs are checked, writes a run
manifest before any work starts and leaves checkpoints, telemetry, reports
and plots inside it.
"""

import json
import logging
import sys
from argparse import Action, ArgumentParser, ArgumentTypeError, Namespace
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Any

import numpy as np
import torch
from PIL import Image

from .. import __version__
from ..core.errors import ConfigError, MissingArtifactError
from ..core.latent import LatentBatch
from ..diagnostics.embedding import latent_embedding_2d
from ..diagnostics.metrics import ReconReport, evaluate_reconstruction, score_images
from ..diagnostics.plots import (
    plot_branch_losses,
    plot_embedding,
    plot_image_grid,
    plot_spectra,
    plot_vae_losses,
)
from ..diagnostics.sensitivity import AblationMode, sensitivity_sweep
from ..diagnostics.spectrum import branch_spectra, high_freq_energy_fraction
from ..diagnostics.sweep import DEFAULT_WEIGHTS, sweep_align
from ..models.flow import SamplerConfig, sample
from ..models.perceptual import RandomFeatureExtractor
from ..training.checkpoint import checkpoint_hash
from ..training.config import (
    PRESETS,
    DatasetConfig,
    TrainConfig,
    config_hash,
    json_schema,
    load_config,
    parse_override_value,
    run_root,
)
from ..training.data import make_dataset, make_loader, split_resolutions
from ..training.trainer import load_adapter, load_davae, run_stage, write_report

logger = logging.getLogger(__name__)

# Package metadata
MODULE_NAME = "davae"
DESCRIPTION = "Train, fine-tune and evaluate detail-aligned VAE tokenizers"
EPILOG = "See detail_aligned_vae/cli/README.md for the full pipeline walkthrough."

EXIT_FAILURE = 1
EXIT_USAGE = 2

MANIFEST_NAME = "run_manifest.json"


class ParseDict(Action):
    """Collect repeated ``key=value`` pairs; values are parsed as JSON."""

    def __call__(
        self,
        parser: ArgumentParser,
        namespace: Any,
        values: str | Sequence[Any] | None,
        option_string: str | None = None,
    ) -> None:
        result = dict(getattr(namespace, self.dest, None) or {})
        if values is None:
            setattr(namespace, self.dest, result)
            return
        if isinstance(values, str):
            values = [values]
        for value in values:
            if not isinstance(value, str) or "=" not in value:
                raise ArgumentTypeError(f"Invalid format: {value}. Expected key=value")
            key, val = value.split("=", 1)
            result[key.strip()] = parse_override_value(val)
        setattr(namespace, self.dest, result)


@dataclass
class RunManifest:
    """What a run consumed and produced, with content hashes."""

    command: str
    run_dir: str
    tool_version: str = __version__
    stage: str | None = None
    seed: int | None = None
    config_hash: str | None = None
    config_path: str | None = None
    inputs: dict[str, str] = field(default_factory=dict)
    consumed: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    status: str = "started"

    def write(self) -> Path:
        return write_report(Path(self.run_dir) / MANIFEST_NAME, asdict(self))


def new_run_dir(command: str) -> Path:
    """Fresh directory ``<run root>/<timestamp>-<command>``; never reused."""
    root = run_root()
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
    candidate = root / f"{stamp}-{command}"
    suffix = 1
    while candidate.exists():
        suffix += 1
        candidate = root / f"{stamp}-{command}-{suffix}"
    candidate.mkdir(parents=True, exist_ok=False)
    return candidate


def _checkpoint_inputs(config: TrainConfig) -> dict[str, str]:
    inputs = {}
    for name in ("base_vae", "base_dit", "davae"):
        path = getattr(config.init, name)
        if path is not None:
            inputs[name] = str(path)
    return inputs


def _consumed_hashes(inputs: dict[str, str]) -> dict[str, str]:
    hashes = {}
    for name, path in inputs.items():
        if (Path(path) / "manifest.json").exists():
            hashes[name] = checkpoint_hash(path)
    return hashes


def _stage_config(
    args: Namespace, stage: str, overrides: dict[str, Any]
) -> TrainConfig:
    config = load_config(args.config, {**(args.overrides or {}), **overrides})
    if config.stage != stage:
        raise ConfigError(
            "stage", f"'{args.config}' configures '{config.stage}', not '{stage}'"
        )
    return config


STAGE_INPUTS = {
    "train_davae": {"base_vae": "base VAE checkpoint (init.base_vae)"},
    "finetune_dit": {
        "davae": "DA-VAE checkpoint (init.davae)",
        "base_dit": "base DiT checkpoint (init.base_dit)",
    },
}


def _check_inputs(config: TrainConfig, resume: str | None = None) -> None:
    """Fail before a run directory exists when a consumed checkpoint is missing."""
    for name, artifact in STAGE_INPUTS.get(config.stage, {}).items():
        if name == "base_dit" and config.ablation.from_scratch:
            continue
        path = getattr(config.init, name)
        if path is None or not (Path(path) / "manifest.json").exists():
            raise MissingArtifactError(artifact, path)
    if resume is not None and not (Path(resume) / "manifest.json").exists():
        raise MissingArtifactError("checkpoint to resume from", resume)


def _run_training(
    args: Namespace, command: str, stage: str, overrides: dict[str, Any]
) -> None:
    config = _stage_config(args, stage, overrides)
    resume = getattr(args, "resume", None)
    _check_inputs(config, resume)
    run_dir = new_run_dir(command)
    inputs = _checkpoint_inputs(config)
    if resume is not None:
        inputs["resume"] = str(resume)
    manifest = RunManifest(
        command=command,
        run_dir=str(run_dir),
        stage=stage,
        seed=config.seed,
        config_hash=config_hash(config),
        config_path=str(Path(args.config).resolve()),
        inputs=inputs,
        consumed=_consumed_hashes(inputs),
    )
    manifest.write()
    print(f"Run directory: {run_dir}")

    result = run_stage(config, run_dir, resume)
    manifest.outputs = {name: str(path) for name, path in result.checkpoints.items()}
    manifest.outputs["telemetry"] = str(result.telemetry)
    manifest.outputs.update({name: str(path) for name, path in result.reports.items()})
    manifest.status = "complete"
    manifest.write()
    for name, path in manifest.outputs.items():
        print(f"{name}: {path}")


def cmd_pretrain(args: Namespace) -> None:
    _run_training(args, "pretrain", "pretrain_base_vae", {})


def cmd_train_vae(args: Namespace) -> None:
    overrides = {"ablation.no_alignment": True} if args.ablate_no_alignment else {}
    _run_training(args, "train-vae", "train_davae", overrides)


def cmd_finetune(args: Namespace) -> None:
    overrides = {}
    if args.ablate_random_init:
        overrides["ablation.random_init"] = True
    if args.ablate_no_scheduler:
        overrides["ablation.no_scheduler"] = True
    if args.from_scratch:
        overrides["ablation.from_scratch"] = True
    _run_training(args, "finetune", "finetune_dit", overrides)


def _eval_dataset(args: Namespace) -> DatasetConfig:
    if args.config is not None:
        return load_config(args.config, args.overrides).dataset
    return DatasetConfig(
        kind="folder" if args.data_path else "procedural",
        path=args.data_path,
        num_images=args.num_images,
        num_classes=args.num_classes,
        hr_size=args.hr_size,
        seed=args.data_seed,
    )


def _eval_loader(args: Namespace) -> Any:
    return make_loader(
        make_dataset(_eval_dataset(args)), args.batch_size, args.seed, shuffle=False
    )


def _start_eval(args: Namespace, command: str) -> tuple[Path, RunManifest]:
    """Create the run directory; callers load and check their inputs first."""
    run_dir = new_run_dir(command)
    inputs = {"model": str(args.model)} if getattr(args, "model", None) else {}
    manifest = RunManifest(
        command=command,
        run_dir=str(run_dir),
        seed=getattr(args, "seed", None),
        config_path=str(args.config) if getattr(args, "config", None) else None,
        inputs=inputs,
        consumed=_consumed_hashes(inputs),
    )
    manifest.write()
    print(f"Run directory: {run_dir}")
    return run_dir, manifest


def _finish(manifest: RunManifest, outputs: dict[str, Path]) -> None:
    manifest.outputs = {name: str(path) for name, path in outputs.items()}
    manifest.status = "complete"
    manifest.write()
    for name, path in outputs.items():
        print(f"{name}: {path}")


def cmd_eval(args: Namespace) -> None:
    if args.model is None and not args.identity:
        raise ConfigError("model", "a DA-VAE checkpoint is required unless --identity")
    loader = _eval_loader(args)
    vae = None if args.identity else load_davae(args.model)[0]
    run_dir, manifest = _start_eval(args, "eval")
    extractor = RandomFeatureExtractor()
    if vae is None:
        report = ReconReport(mode="identity")
        for images, _ in loader:
            if args.max_images is not None and len(report) >= args.max_images:
                break
            score_images(images, images, report, extractor)
    else:
        report = evaluate_reconstruction(
            vae, loader, extractor, max_images=args.max_images
        )
    outputs = {"report": write_report(run_dir / "eval.json", report.to_dict())}
    print(
        f"PSNR {report.mean_psnr:.3f} dB, SSIM {report.mean_ssim:.4f}, "
        f"perceptual distance {report.mean_perceptual_distance:.4f}"
    )
    _finish(manifest, outputs)


@torch.no_grad()
def _encode_batch(
    vae: Any, loader: Any, max_images: int
) -> tuple[torch.Tensor, torch.Tensor, list[int]]:
    device = next(vae.parameters()).device
    bases, details, labels = [], [], []
    count = 0
    for images, batch_labels in loader:
        image_base, image_hr = split_resolutions(images.to(device), vae.layout.scale)
        latent = vae.encode_mean(image_base, image_hr)
        bases.append(latent.base.cpu())
        details.append(latent.detail.cpu())
        labels.extend(int(label) for label in batch_labels)
        count += images.shape[0]
        if count >= max_images:
            break
    base = torch.cat(bases)[:max_images]
    detail = torch.cat(details)[:max_images]
    return base, detail, labels[:max_images]


def cmd_spectrum(args: Namespace) -> None:
    vae, _ = load_davae(args.model)
    vae.eval()
    loader = _eval_loader(args)
    run_dir, manifest = _start_eval(args, "spectrum")
    base, detail, labels = _encode_batch(vae, loader, args.max_images)
    latents = LatentBatch.from_tensors(base, detail, labels)
    profiles = branch_spectra(latents)
    fractions = {
        branch: high_freq_energy_fraction(profile, args.cutoff)
        for branch, profile in profiles.items()
    }
    points = latent_embedding_2d(latents)
    outputs = {
        "spectrum": write_report(
            run_dir / "spectrum.json",
            {
                "cutoff_fraction": args.cutoff,
                "high_freq_energy_fraction": fractions,
                "profiles": {name: p.to_dict() for name, p in profiles.items()},
            },
        ),
        "embedding": write_report(
            run_dir / "embedding.json",
            [{"x": x, "y": y, "label": label} for x, y, label in points],
        ),
    }
    if not args.no_plots:
        outputs["spectrum_plot"] = plot_spectra(profiles, run_dir / "spectrum.png")
        outputs["embedding_plot"] = plot_embedding(points, run_dir / "embedding.png")
    for branch, fraction in fractions.items():
        print(f"{branch}: high-frequency energy fraction {fraction:.4f}")
    _finish(manifest, outputs)


def cmd_ablate(args: Namespace) -> None:
    vae, _ = load_davae(args.model)
    loader = _eval_loader(args)
    run_dir, manifest = _start_eval(args, "ablate")
    reports = sensitivity_sweep(
        vae, loader, rng_seed=args.seed, max_images=args.max_images
    )
    outputs = {
        mode: write_report(run_dir / f"ablate_{mode}.json", report.to_dict())
        for mode, report in reports.items()
    }
    if not args.no_plots:
        outputs["grid"] = _ablation_grid(vae, loader, args.seed, run_dir / "ablate.png")
    for mode, report in reports.items():
        print(f"{mode}: PSNR {report.mean_psnr:.3f} dB, SSIM {report.mean_ssim:.4f}")
    _finish(manifest, outputs)


@torch.no_grad()
def _ablation_grid(vae: Any, loader: Any, seed: int, output: Path) -> Path:
    device = next(vae.parameters()).device
    images, _ = next(iter(loader))
    images = images[:8].to(device)
    image_base, image_hr = split_resolutions(images, vae.layout.scale)
    latent = vae.encode_mean(image_base, image_hr)
    generator = torch.Generator().manual_seed(seed)
    rows = {"input": image_hr}
    for mode in AblationMode:
        detail = latent.detail
        if mode is AblationMode.ZERO_DETAIL:
            detail = torch.zeros_like(detail)
        elif mode is AblationMode.RANDOM_DETAIL:
            noise = torch.randn(detail.shape, generator=generator, dtype=detail.dtype)
            detail = noise.to(device)
        rows[mode.value] = vae.decode(replace(latent, detail=detail)).clamp(-1, 1)
    return plot_image_grid(rows, output)


def _sampler_config(args: Namespace) -> SamplerConfig:
    base = SamplerConfig()
    if args.preset:
        base = SamplerConfig(**PRESETS[args.preset]["sampling"])
    values = {
        "steps": args.steps,
        "guidance_scale": args.cfg,
        "cfg_interval_start": args.cfg_start,
        "timestep_shift": args.shift,
    }
    return replace(base, **{k: v for k, v in values.items() if v is not None})


def cmd_sample(args: Namespace) -> None:
    adapter, adapter_checkpoint = load_adapter(args.model, use_ema=not args.no_ema)
    vae, _ = load_davae(args.vae)
    expected = adapter_checkpoint.metadata.get("consumed", {}).get("davae")
    if expected is not None and expected != checkpoint_hash(args.vae):
        logger.warning(
            "DA-VAE %s hashes to %s, the adapter was trained on %s",
            args.vae,
            checkpoint_hash(args.vae),
            expected,
        )
    run_dir, manifest = _start_eval(args, "sample")
    cfg = _sampler_config(args)
    latent_scale = float(adapter_checkpoint.metadata.get("latent_scale", 1.0))
    images = sample(adapter, vae, args.labels, cfg, args.seed, latent_scale)

    sample_dir = run_dir / "samples"
    sample_dir.mkdir()
    outputs: dict[str, Path] = {}
    for index, (image, label) in enumerate(zip(images, args.labels, strict=True)):
        array = ((image.cpu().permute(1, 2, 0) + 1) * 127.5).round().numpy()
        path = sample_dir / f"{index:04d}_class{label}.png"
        Image.fromarray(array.astype(np.uint8)).save(path)
    outputs["samples"] = sample_dir
    outputs["sampler"] = write_report(
        run_dir / "sampler.json",
        {**asdict(cfg), "labels": args.labels, "seed": args.seed},
    )
    if not args.no_plots:
        outputs["grid"] = plot_image_grid({"samples": images}, run_dir / "samples.png")
    _finish(manifest, outputs)


def cmd_plot(args: Namespace) -> None:
    for path in (args.telemetry, args.compare):
        if path is not None and not Path(path).is_file():
            raise MissingArtifactError("telemetry CSV", str(path))
    run_dir, manifest = _start_eval(args, "plot")
    manifest.inputs["telemetry"] = str(args.telemetry)
    if args.compare is not None:
        manifest.inputs["compare"] = str(args.compare)
    outputs = {}
    if args.stage in ("train_davae", "all"):
        outputs["vae_losses"] = plot_vae_losses(
            args.telemetry, run_dir / "vae_losses.png"
        )
    if args.stage in ("finetune_dit", "all"):
        outputs["branch_losses"] = plot_branch_losses(
            args.telemetry,
            run_dir / "branch_losses.png",
            alpha=args.alpha,
            compare=args.compare,
            run_labels=(args.run_labels[0], args.run_labels[1]),
        )
    _finish(manifest, outputs)


def cmd_sweep_align(args: Namespace) -> None:
    config = _stage_config(args, "train_davae", {})
    _check_inputs(config)
    run_dir = new_run_dir("sweep-align")
    inputs = _checkpoint_inputs(config)
    manifest = RunManifest(
        command="sweep-align",
        run_dir=str(run_dir),
        stage="train_davae",
        seed=config.seed,
        config_hash=config_hash(config),
        config_path=str(Path(args.config).resolve()),
        inputs=inputs,
        consumed=_consumed_hashes(inputs),
    )
    manifest.write()
    summary = sweep_align(config, run_dir, args.weights, args.steps, args.max_images)
    for row in summary["results"]:
        print(
            f"lambda_align={row['lambda_align']:g}: PSNR {row['psnr']:.3f} dB, "
            f"final alignment {row['final_align']}"
        )
    _finish(manifest, {"summary": run_dir / "sweep_align.json"})


def cmd_schema(args: Namespace) -> None:
    print(json.dumps(json_schema(), indent=2, sort_keys=True))


def _add_config(parser: ArgumentParser, required: bool = True) -> None:
    if required:
        parser.add_argument("config", help="Stage config JSON file", type=str)
    else:
        parser.add_argument(
            "-c", "--config", help="Stage config JSON file for the dataset", type=str
        )
    parser.add_argument(
        "--set",
        dest="overrides",
        nargs="+",
        action=ParseDict,
        metavar="KEY=VALUE",
        help="Override config keys by dotted path, e.g. schedule.n_warm=200",
    )


EVAL_OPTIONS: tuple[tuple[str, str, type, Any], ...] = (
    ("--num-images", "Procedural images", int, 64),
    ("--num-classes", "Procedural classes", int, 10),
    ("--hr-size", "High-res image side", int, 64),
    ("--data-seed", "Procedural dataset seed", int, 0),
    ("--batch-size", "Batch size", int, 16),
    ("--max-images", "Stop after this many images", int, 64),
    ("--seed", "Random seed", int, 0),
)


def _add_eval_data(parser: ArgumentParser) -> None:
    _add_config(parser, required=False)
    parser.add_argument(
        "--data-path",
        help="Image folder (default: procedural dataset)",
        type=str,
    )
    for flag, text, kind, default in EVAL_OPTIONS:
        parser.add_argument(
            flag, help=f"{text} (default: {default})", type=kind, default=default
        )
    parser.add_argument(
        "--no-plots",
        action="store_true",
        help="Skip PNG output",
        default=False,
    )


def build_parser() -> ArgumentParser:
    defaults = SamplerConfig()
    ap = ArgumentParser(prog=MODULE_NAME, description=DESCRIPTION, epilog=EPILOG)
    ap.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="Increase log verbosity (-v info, -vv debug)",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("pretrain", help="Train the base VAE and base DiT")
    _add_config(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train-vae", help="Train the DA-VAE around the base encoder")
    _add_config(p)
    p.add_argument("--resume", help="DA-VAE checkpoint to resume from", type=str)
    p.add_argument(
        "--ablate-no-alignment",
        action="store_true",
        help="Train without the alignment loss (lambda_align = 0)",
        default=False,
    )
    p.set_defaults(func=cmd_train_vae)

    p = sub.add_parser("finetune", help="Warm-start the base DiT on both latents")
    _add_config(p)
    p.add_argument("--resume", help="Adapter checkpoint to resume from", type=str)
    p.add_argument(
        "--ablate-random-init",
        action="store_true",
        help="Random instead of zero init for the detail embedder and head",
        default=False,
    )
    p.add_argument(
        "--ablate-no-scheduler",
        action="store_true",
        help="Fix the detail loss weight at 1 (default: cosine warm-up)",
        default=False,
    )
    p.add_argument(
        "--from-scratch",
        action="store_true",
        help="Train the adapted DiT from random initialization",
        default=False,
    )
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="Reconstruction PSNR, SSIM and perceptual distance")
    p.add_argument("model", help="DA-VAE checkpoint directory", type=str, nargs="?")
    _add_eval_data(p)
    p.add_argument(
        "--identity",
        action="store_true",
        help="Score every image against itself (no model needed)",
        default=False,
    )
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("spectrum", help="Latent radial power spectra and 2D embedding")
    p.add_argument("model", help="DA-VAE checkpoint directory", type=str)
    _add_eval_data(p)
    p.add_argument(
        "--cutoff",
        help="High-frequency cutoff as a fraction of Nyquist (default: 0.5)",
        type=float,
        default=0.5,
    )
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("ablate", help="Decoder sensitivity to the detail latent")
    p.add_argument("model", help="DA-VAE checkpoint directory", type=str)
    _add_eval_data(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sample", help="Generate images with a fine-tuned adapter")
    p.add_argument("model", help="Adapter checkpoint directory", type=str)
    p.add_argument("--vae", help="DA-VAE checkpoint directory", type=str, required=True)
    p.add_argument(
        "--labels", help="Class labels to sample", type=int, nargs="+", required=True
    )
    p.add_argument(
        "--preset", help="Take sampler defaults from a preset", choices=sorted(PRESETS)
    )
    p.add_argument("--steps", help=f"Euler steps (default: {defaults.steps})", type=int)
    p.add_argument(
        "--cfg",
        help=f"Guidance scale, 1 disables it (default: {defaults.guidance_scale})",
        type=float,
    )
    p.add_argument(
        "--cfg-start",
        help=f"Guidance interval start (default: {defaults.cfg_interval_start})",
        type=float,
    )
    p.add_argument(
        "--shift",
        help=f"Timestep shift (default: {defaults.timestep_shift})",
        type=float,
    )
    p.add_argument("--seed", help="Random seed (default: 0)", type=int, default=0)
    p.add_argument(
        "--no-ema", action="store_true", help="Use live weights", default=False
    )
    p.add_argument(
        "--no-plots", action="store_true", help="Skip the grid PNG", default=False
    )
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("plot", help="Loss curves from a telemetry CSV")
    p.add_argument("telemetry", help="telemetry.csv of a run", type=str)
    p.add_argument(
        "--stage",
        choices=("train_davae", "finetune_dit", "all"),
        default="all",
        help="Which curves to draw (default: all)",
    )
    p.add_argument(
        "--alpha", help="EMA smoothing (default: 0.98)", type=float, default=0.98
    )
    p.add_argument(
        "--compare",
        help="Second telemetry.csv overlaid on the branch losses",
        type=str,
    )
    p.add_argument(
        "--run-labels",
        help="Legend names of the two runs (default: run comparison)",
        nargs=2,
        metavar=("MAIN", "COMPARE"),
        default=["run", "comparison"],
    )
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("sweep-align", help="One short DA-VAE run per alignment weight")
    _add_config(p)
    p.add_argument(
        "--weights",
        help="Alignment weights (default: 0.0 0.1 0.5 1.0)",
        type=float,
        nargs="+",
        default=list(DEFAULT_WEIGHTS),
    )
    p.add_argument("--steps", help="DA-VAE steps per weight", type=int)
    p.add_argument(
        "--max-images", help="Images to evaluate (default: 64)", type=int, default=64
    )
    p.set_defaults(func=cmd_sweep_align)

    p = sub.add_parser("schema", help="Print the stage config JSON schema")
    p.set_defaults(func=cmd_schema)
    return ap


def davae(argv: Sequence[str] | None = None) -> None:
    args = build_parser().parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    args.func(args)


def main(argv: Sequence[str] | None = None) -> None:
    """Entry point for the CLI command."""
    try:
        davae(argv)
    except KeyboardInterrupt:
        print("\nInterrupted by user")
        sys.exit(EXIT_FAILURE)
    except ConfigError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(EXIT_USAGE)
    except Exception as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(EXIT_FAILURE)


if __name__ == "__main__":
    main()
