"""Stage drivers: base pretraining, DA-VAE training and DiT fine-tuning.

Every stage is deterministic given its config: data order, latent/flow noise
and label dropout draw from separately seeded generators. Telemetry rows and
checkpoints are written under the stage's run directory.
"""

import json
import logging
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import torch
import torch.nn.functional as F
from torch import nn

from ..core.errors import CheckpointError, MissingArtifactError
from ..core.latent import LatentLayout, StructuredLatent
from ..models.adapter import DiTAdapter, attach_adapter, check_equivalence
from ..models.discriminator import PatchDiscriminator, hinge_d_loss
from ..models.dit import DiTGeometry, ToyDiT
from ..models.flow import WarmupSchedule, dit_loss, loss_weight, make_velocity_target
from ..models.losses import (
    check_finite,
    kl_loss,
    vae_reconstruction_loss,
    vae_total_loss,
)
from ..models.perceptual import RandomFeatureExtractor
from ..models.tokenizer import BaseAutoencoder, VaeModel, sample_latent
from .checkpoint import (
    Checkpoint,
    checkpoint_hash,
    load_checkpoint,
    load_module,
    module_arrays,
    optimizer_arrays,
    restore_optimizer,
    save_checkpoint,
    state_hash,
)
from .config import OptimConfig, TrainConfig, config_hash
from .data import forever, make_dataset, make_loader, split_resolutions
from .ema import EmaState, ema_update
from .telemetry import IntervalMeans, TelemetryRecord, TelemetryWriter

logger = logging.getLogger(__name__)

TELEMETRY_NAME = "telemetry.csv"
EQUIVALENCE_NAME = "equivalence.json"


@dataclass
class StageResult:
    stage: str
    run_dir: Path
    telemetry: Path
    checkpoints: dict[str, Path] = field(default_factory=dict)
    reports: dict[str, Path] = field(default_factory=dict)


class RngStreams:
    """Independent generators for data order, noise and label dropout.

    Data order is replayed on resume by skipping batches; the noise and
    dropout generators are checkpointed under ``rng.*``.
    """

    def __init__(self, seed: int) -> None:
        self.data_seed = seed
        self.noise = torch.Generator().manual_seed(seed + 1_000)
        self.dropout = torch.Generator().manual_seed(seed + 2_000)

    def state_arrays(self) -> dict[str, torch.Tensor]:
        """Generator states as float arrays; byte values survive the round trip."""
        return {
            "rng.noise": self.noise.get_state().to(torch.float32),
            "rng.dropout": self.dropout.get_state().to(torch.float32),
        }

    def restore(self, checkpoint: Checkpoint) -> None:
        states = checkpoint.subset("rng")
        if set(states) != {"noise", "dropout"}:
            logger.warning(
                "Checkpoint has no generator state; noise after resuming "
                "will differ from an uninterrupted run"
            )
            return
        self.noise.set_state(states["noise"].to(torch.uint8))
        self.dropout.set_state(states["dropout"].to(torch.uint8))


def write_report(path: str | Path, obj: Any) -> Path:
    """JSON with sorted keys, written through a temporary file."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_name(target.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    tmp.replace(target)
    return target


def _setup(config: TrainConfig) -> torch.device:
    torch.manual_seed(config.seed)
    torch.use_deterministic_algorithms(True, warn_only=True)
    return torch.device(config.device)


def _adamw(
    params: Sequence[nn.Parameter] | Iterator[nn.Parameter], optim: OptimConfig
) -> torch.optim.AdamW:
    return torch.optim.AdamW(
        params,
        lr=optim.learning_rate,
        betas=optim.betas,
        weight_decay=optim.weight_decay,
    )


def _randn_like(tensor: torch.Tensor, generator: torch.Generator) -> torch.Tensor:
    return torch.randn(tensor.shape, generator=generator, dtype=tensor.dtype).to(
        tensor.device
    )


def _drop_labels(
    labels: torch.Tensor, null_id: int, probability: float, generator: torch.Generator
) -> torch.Tensor:
    if probability <= 0:
        return labels
    drop = torch.rand(labels.shape, generator=generator).to(labels.device) < probability
    return torch.where(drop, torch.full_like(labels, null_id), labels)


def _require(path: str | None, artifact: str) -> Path:
    if path is None or not (Path(path) / "manifest.json").exists():
        raise MissingArtifactError(artifact, path)
    return Path(path)


def _layout_from(checkpoint: Checkpoint) -> LatentLayout:
    return LatentLayout.from_dict(checkpoint.metadata["layout"])


def _log_row(
    writer: TelemetryWriter,
    means: IntervalMeans,
    step: int,
    stage: str,
    lr: float,
    w: float | None = None,
    ema: int = 0,
) -> None:
    values = means.pop()
    record = TelemetryRecord(step=step, stage=stage, lr=lr, w=w, ema=ema, **values)
    writer.append(record)
    logger.info(
        "%s step %d: %s",
        stage,
        step,
        ", ".join(f"{name}={value:.5g}" for name, value in sorted(values.items())),
    )


# Model construction and loading


def build_dit(config: TrainConfig, num_classes: int) -> ToyDiT:
    grid_h, grid_w = config.latent_grid
    geometry = DiTGeometry(
        config.layout.base_channels, config.layout.patch_size, grid_h, grid_w
    )
    return ToyDiT(
        geometry,
        hidden_size=config.model.dit_hidden_size,
        depth=config.model.dit_depth,
        num_heads=config.model.dit_heads,
        num_classes=num_classes,
        with_null=True,
    )


def load_base_autoencoder(path: str | Path) -> tuple[BaseAutoencoder, Checkpoint]:
    """Rebuild the pretrained base VAE and check its encoder hash."""
    checkpoint = load_checkpoint(path)
    meta = checkpoint.metadata
    model = BaseAutoencoder(_layout_from(checkpoint), width=meta["width"])
    load_module(model, checkpoint, "base_ae")
    actual = state_hash(model.encoder)
    if actual != meta["encoder_hash"]:
        raise CheckpointError(
            f"Base encoder in {path} hashes to {actual}, "
            f"manifest records {meta['encoder_hash']}"
        )
    return model, checkpoint


def load_davae(path: str | Path) -> tuple[VaeModel, Checkpoint]:
    checkpoint = load_checkpoint(path)
    meta = checkpoint.metadata
    vae = VaeModel(_layout_from(checkpoint), width=meta["width"])
    load_module(vae, checkpoint, "vae")
    vae.freeze_base()
    vae.trained_steps = int(meta.get("trained_steps", 0))
    actual = state_hash(vae.base_encoder)
    if actual != meta["encoder_hash"]:
        raise CheckpointError(
            f"Frozen encoder in {path} hashes to {actual}, "
            f"manifest records {meta['encoder_hash']}"
        )
    return vae, checkpoint


def _dit_from_metadata(meta: dict[str, Any]) -> ToyDiT:
    return ToyDiT(
        DiTGeometry(**meta["geometry"]),
        hidden_size=meta["hidden_size"],
        depth=meta["depth"],
        num_heads=meta["num_heads"],
        num_classes=meta["num_classes"],
        with_null=meta["with_null"],
    )


def _dit_metadata(dit: ToyDiT) -> dict[str, Any]:
    geometry = dit.geometry
    return {
        "geometry": {
            "channels": geometry.channels,
            "patch_size": geometry.patch_size,
            "grid_h": geometry.grid_h,
            "grid_w": geometry.grid_w,
        },
        "hidden_size": dit.hidden_size,
        "depth": len(dit.backbone.blocks),
        "num_heads": dit.backbone.blocks[0].attn.num_heads,
        "num_classes": dit.num_classes,
        "with_null": dit.backbone.y_embedder.with_null,
    }


def load_base_dit(path: str | Path) -> tuple[ToyDiT, Checkpoint]:
    checkpoint = load_checkpoint(path)
    dit = _dit_from_metadata(checkpoint.metadata)
    load_module(dit, checkpoint, "dit")
    return dit, checkpoint


def load_adapter(
    path: str | Path, use_ema: bool = True
) -> tuple[DiTAdapter, Checkpoint]:
    """Rebuild a fine-tuned adapter; EMA weights are loaded when present."""
    checkpoint = load_checkpoint(path)
    meta = checkpoint.metadata
    dit = _dit_from_metadata(meta)
    adapter = attach_adapter(dit, LatentLayout.from_dict(meta["layout"]))
    load_module(adapter, checkpoint, "adapter")
    shadow = checkpoint.subset("ema")
    if use_ema and shadow:
        EmaState(shadow, decay=meta.get("ema_decay", 0.999)).copy_to(adapter)
    return adapter, checkpoint


# Stage drivers


def pretrain_base(config: TrainConfig, run_dir: str | Path) -> StageResult:
    """Train the base-resolution VAE, estimate the latent scale, then the base DiT.

    Returns:
        Checkpoints ``base_vae`` and ``base_dit`` plus the telemetry path
    """
    device = _setup(config)
    run_dir = Path(run_dir)
    streams = RngStreams(config.seed)
    layout = config.layout
    dataset = make_dataset(config.dataset)
    writer = TelemetryWriter(run_dir / TELEMETRY_NAME, config.logging.wallclock)
    result = StageResult("pretrain_base_vae", run_dir, telemetry=writer.path)

    # Base VAE: L1 + KL at base resolution
    base_ae = BaseAutoencoder(layout, width=config.model.vae_width).to(device)
    optimizer = _adamw(base_ae.parameters(), config.vae_optim)
    batches = forever(
        make_loader(dataset, config.vae_optim.batch_size, streams.data_seed)
    )
    means = IntervalMeans()
    for n in range(config.pretrain.vae_steps):
        images_hr, _ = next(batches)
        image_base, _ = split_resolutions(images_hr.to(device), layout.scale)
        params = base_ae.encode(image_base)
        reconstruction = base_ae.decode(sample_latent(params, streams.noise))
        l1 = F.l1_loss(reconstruction, image_base)
        kl = kl_loss(params)
        check_finite("l1", l1, n)
        check_finite("kl", kl, n)
        loss = l1 + config.pretrain.lambda_kl * kl
        optimizer.zero_grad()
        loss.backward()
        nn.utils.clip_grad_norm_(base_ae.parameters(), config.vae_optim.grad_clip)
        optimizer.step()
        means.add(vae_total=float(loss), vae_l1=float(l1), vae_kl=float(kl))
        if (n + 1) % config.logging.interval == 0:
            lr = config.vae_optim.learning_rate
            _log_row(writer, means, n + 1, "pretrain_base_vae", lr)

    latent_scale = estimate_latent_scale(
        base_ae, dataset, config, streams.data_seed, device
    )
    encoder_hash = state_hash(base_ae.encoder)
    base_vae_dir = run_dir / "checkpoints" / "base_vae"
    save_checkpoint(
        base_vae_dir,
        module_arrays("base_ae", base_ae),
        {
            "kind": "base_vae",
            "layout": layout.to_dict(),
            "width": config.model.vae_width,
            "encoder_hash": encoder_hash,
            "latent_scale": latent_scale,
            "trained_steps": config.pretrain.vae_steps,
            "config_hash": config_hash(config),
        },
    )
    result.checkpoints["base_vae"] = base_vae_dir
    logger.info("Base VAE done; latent scale %.5f", latent_scale)

    # Base DiT: rectified flow on scaled base latents
    num_classes = _num_classes(dataset)
    dit = build_dit(config, num_classes).to(device)
    base_ae.eval()
    optimizer = _adamw(dit.parameters(), config.dit_optim)
    batches = forever(
        make_loader(dataset, config.dit_optim.batch_size, streams.data_seed + 1)
    )
    null_id = dit.backbone.y_embedder.null_id
    for n in range(config.pretrain.dit_steps):
        images_hr, labels = next(batches)
        image_base, _ = split_resolutions(images_hr.to(device), layout.scale)
        with torch.no_grad():
            x1 = sample_latent(base_ae.encode(image_base), streams.noise) * latent_scale
        x0 = _randn_like(x1, streams.noise)
        t = torch.rand(x1.shape[0], generator=streams.noise).to(device)
        tt = t.view(-1, 1, 1, 1)
        x_t = (1 - tt) * x0 + tt * x1
        y = _drop_labels(
            labels.to(device), null_id, config.schedule.label_dropout, streams.dropout
        )
        loss = F.mse_loss(dit(x_t, t, y), x1 - x0)
        check_finite("dit", loss, n)
        optimizer.zero_grad()
        loss.backward()
        nn.utils.clip_grad_norm_(dit.parameters(), config.dit_optim.grad_clip)
        optimizer.step()
        means.add(dit_total=float(loss), dit_base=float(loss))
        if (n + 1) % config.logging.interval == 0:
            lr = config.dit_optim.learning_rate
            _log_row(writer, means, n + 1, "pretrain_base_dit", lr)

    base_dit_dir = run_dir / "checkpoints" / "base_dit"
    save_checkpoint(
        base_dit_dir,
        module_arrays("dit", dit),
        {
            "kind": "base_dit",
            "layout": layout.to_dict(),
            "latent_scale": latent_scale,
            "encoder_hash": encoder_hash,
            "trained_steps": config.pretrain.dit_steps,
            "config_hash": config_hash(config),
            **_dit_metadata(dit),
        },
    )
    result.checkpoints["base_dit"] = base_dit_dir
    return result


def _num_classes(dataset: Any) -> int:
    return int(getattr(dataset, "num_classes", 1))


@torch.no_grad()
def estimate_latent_scale(
    base_ae: BaseAutoencoder,
    dataset: Any,
    config: TrainConfig,
    seed: int,
    device: torch.device,
) -> float:
    """``1 / std`` of base posterior means over a few batches."""
    base_ae.eval()
    loader = make_loader(dataset, config.vae_optim.batch_size, seed, shuffle=False)
    means = []
    for index, (images_hr, _) in enumerate(loader):
        if index >= config.pretrain.scale_batches:
            break
        image_base, _ = split_resolutions(images_hr.to(device), config.layout.scale)
        means.append(base_ae.encode(image_base).mean.flatten())
    std = float(torch.cat(means).std())
    base_ae.train()
    if std == 0.0:
        logger.warning("Base latents have zero spread; using latent scale 1.0")
        return 1.0
    return 1.0 / std


def train_davae(
    config: TrainConfig, run_dir: str | Path, resume: str | Path | None = None
) -> StageResult:
    """Train the detail encoder and joint decoder around the frozen base encoder.

    Raises:
        MissingArtifactError: If the base VAE checkpoint is missing
        NonFiniteLossError: If a loss term diverges; the last interval
            checkpoint stays on disk
    """
    device = _setup(config)
    run_dir = Path(run_dir)
    streams = RngStreams(config.seed)
    layout = config.layout
    base_path = _require(config.init.base_vae, "base VAE checkpoint (init.base_vae)")
    base_ae, base_checkpoint = load_base_autoencoder(base_path)
    base_layout = _layout_from(base_checkpoint)
    if (base_layout.downsample, base_layout.base_channels) != (
        layout.downsample,
        layout.base_channels,
    ):
        raise CheckpointError(
            f"Base VAE in {base_path} has f={base_layout.downsample}, "
            f"C={base_layout.base_channels}; config layout has "
            f"f={layout.downsample}, C={layout.base_channels}"
        )
    encoder_hash = base_checkpoint.metadata["encoder_hash"]
    latent_scale = float(base_checkpoint.metadata.get("latent_scale", 1.0))

    weights = config.loss
    if config.ablation.no_alignment:
        weights = replace(weights, lambda_align=0.0)

    vae = VaeModel(layout, config.model.vae_width, base_encoder=base_ae.encoder)
    vae = vae.to(device)
    perceptual = RandomFeatureExtractor(seed=config.model.perceptual_seed).to(device)
    discriminator = None
    disc_optimizer = None
    if weights.lambda_adv > 0:
        discriminator = PatchDiscriminator(
            config.model.disc_width, config.model.disc_layers
        ).to(device)
        disc_optimizer = _adamw(discriminator.parameters(), config.vae_optim)
    optimizer = _adamw(vae.trainable_parameters(), config.vae_optim)

    start = 0
    if resume is not None:
        checkpoint = load_checkpoint(resume)
        load_module(vae, checkpoint, "vae")
        restore_optimizer(
            optimizer, checkpoint, "optim.vae", checkpoint.metadata["optim_vae"]
        )
        if discriminator is not None and disc_optimizer is not None:
            load_module(discriminator, checkpoint, "disc")
            restore_optimizer(
                disc_optimizer,
                checkpoint,
                "optim.disc",
                checkpoint.metadata["optim_disc"],
            )
        streams.restore(checkpoint)
        start = int(checkpoint.metadata["trained_steps"])
        logger.info("Resuming DA-VAE training from step %d", start)

    writer = TelemetryWriter(run_dir / TELEMETRY_NAME, config.logging.wallclock)
    result = StageResult("train_davae", run_dir, telemetry=writer.path)
    checkpoint_dir = run_dir / "checkpoints" / "davae"

    def save(step: int) -> None:
        arrays = module_arrays("vae", vae)
        arrays.update(streams.state_arrays())
        optim_arrays, optim_groups = optimizer_arrays("optim.vae", optimizer)
        arrays.update(optim_arrays)
        metadata: dict[str, Any] = {
            "kind": "davae",
            "layout": layout.to_dict(),
            "width": config.model.vae_width,
            "encoder_hash": encoder_hash,
            "latent_scale": latent_scale,
            "loss_weights": {
                "lambda_lpips": weights.lambda_lpips,
                "lambda_l1": weights.lambda_l1,
                "lambda_adv": weights.lambda_adv,
                "lambda_kl": weights.lambda_kl,
                "lambda_align": weights.lambda_align,
            },
            "trained_steps": step,
            "optim_vae": optim_groups,
            "base_vae_hash": checkpoint_hash(base_path),
            "config_hash": config_hash(config),
        }
        if discriminator is not None and disc_optimizer is not None:
            arrays.update(module_arrays("disc", discriminator))
            disc_arrays, disc_groups = optimizer_arrays("optim.disc", disc_optimizer)
            arrays.update(disc_arrays)
            metadata["optim_disc"] = disc_groups
        save_checkpoint(checkpoint_dir, arrays, metadata)

    loader = make_loader(
        make_dataset(config.dataset), config.vae_optim.batch_size, streams.data_seed
    )
    batches = forever(loader)
    for _ in range(start):
        next(batches)
    means = IntervalMeans()
    vae.train()
    for n in range(start, config.vae_optim.total_steps):
        images_hr, _ = next(batches)
        image_base, image_hr = split_resolutions(images_hr.to(device), layout.scale)
        base_params, detail_params = vae.encode_params(image_base, image_hr)
        z = sample_latent(base_params, streams.noise)
        z_d = sample_latent(detail_params, streams.noise)
        reconstruction = vae.decode(StructuredLatent(z, z_d))
        recon = vae_reconstruction_loss(
            image_hr,
            reconstruction,
            weights,
            perceptual,
            discriminator,
            posteriors=[detail_params],
        )
        total, align = vae_total_loss(recon, z, z_d, weights, layout, step=n)
        optimizer.zero_grad()
        total.backward()
        nn.utils.clip_grad_norm_(vae.trainable_parameters(), config.vae_optim.grad_clip)
        optimizer.step()

        disc_value = None
        if discriminator is not None and disc_optimizer is not None:
            disc_loss = hinge_d_loss(
                discriminator(image_hr), discriminator(reconstruction.detach())
            )
            check_finite("disc", disc_loss, n)
            disc_optimizer.zero_grad()
            disc_loss.backward()
            disc_optimizer.step()
            disc_value = float(disc_loss)

        vae.trained_steps = n + 1
        terms = recon.as_floats()
        means.add(
            vae_total=float(total),
            vae_l1=terms["l1"],
            vae_lpips=terms["lpips"],
            vae_adv=terms["adv"],
            vae_kl=terms["kl"],
            vae_align=float(align),
            disc_loss=disc_value,
        )
        if (n + 1) % config.logging.interval == 0:
            lr = config.vae_optim.learning_rate
            _log_row(writer, means, n + 1, "train_davae", lr)
        if (n + 1) % config.logging.checkpoint_interval == 0:
            save(n + 1)

    if state_hash(vae.base_encoder) != encoder_hash:
        raise CheckpointError("Frozen base encoder changed during DA-VAE training")
    save(config.vae_optim.total_steps)
    result.checkpoints["davae"] = checkpoint_dir
    return result


def finetune_dit(
    config: TrainConfig, run_dir: str | Path, resume: str | Path | None = None
) -> StageResult:
    """Warm-start the base DiT on the structured latent of a trained DA-VAE.

    Writes ``equivalence.json`` at step 0, comparing the adapted model with
    the DiT it was attached to.
    """
    device = _setup(config)
    run_dir = Path(run_dir)
    streams = RngStreams(config.seed)
    layout = config.layout
    davae_path = _require(config.init.davae, "DA-VAE checkpoint (init.davae)")
    vae, davae_checkpoint = load_davae(davae_path)
    if _layout_from(davae_checkpoint) != layout:
        raise CheckpointError(
            f"DA-VAE in {davae_path} has layout {_layout_from(davae_checkpoint)}, "
            f"config has {layout}"
        )
    vae = vae.to(device).eval()
    latent_scale = float(davae_checkpoint.metadata.get("latent_scale", 1.0))
    dataset = make_dataset(config.dataset)

    consumed = {"davae": checkpoint_hash(davae_path)}
    if config.ablation.from_scratch:
        source = build_dit(config, _num_classes(dataset))
    else:
        dit_path = _require(config.init.base_dit, "base DiT checkpoint (init.base_dit)")
        source, _ = load_base_dit(dit_path)
        consumed["base_dit"] = checkpoint_hash(dit_path)
    source = source.to(device)
    adapter = attach_adapter(
        source,
        layout,
        init="random" if config.ablation.random_init else "zero",
        latent_grid=config.latent_grid,
        rng_seed=config.seed,
    ).to(device)

    equivalence = check_equivalence(adapter, source, rng_seed=config.seed)
    result = StageResult("finetune_dit", run_dir, run_dir / TELEMETRY_NAME)
    result.reports["equivalence"] = write_report(
        run_dir / EQUIVALENCE_NAME, equivalence.to_dict()
    )
    if equivalence.passed:
        logger.info("Adapter matches the source DiT at step 0")
    else:
        logger.warning(
            "Adapter differs from the source DiT at step 0 (base %.3g, detail %.3g)",
            equivalence.max_abs_base_diff,
            equivalence.max_abs_detail,
        )

    optimizer = _adamw(adapter.parameters(), config.dit_optim)
    ema = EmaState.from_module(adapter, config.schedule.ema_decay)
    schedule = WarmupSchedule(
        config.schedule.n_warm, constant=config.ablation.no_scheduler
    )
    start = 0
    if resume is not None:
        checkpoint = load_checkpoint(resume)
        load_module(adapter, checkpoint, "adapter")
        restore_optimizer(
            optimizer, checkpoint, "optim.dit", checkpoint.metadata["optim_dit"]
        )
        ema = EmaState(
            {
                name: value.to(device)
                for name, value in checkpoint.subset("ema").items()
            },
            config.schedule.ema_decay,
        )
        streams.restore(checkpoint)
        start = int(checkpoint.metadata["trained_steps"])
        logger.info("Resuming fine-tuning from step %d", start)

    writer = TelemetryWriter(run_dir / TELEMETRY_NAME, config.logging.wallclock)
    checkpoint_dir = run_dir / "checkpoints" / "adapter"

    def save(step: int) -> None:
        arrays = module_arrays("adapter", adapter)
        arrays.update(ema.state_dict())
        arrays.update(streams.state_arrays())
        optim_arrays, optim_groups = optimizer_arrays("optim.dit", optimizer)
        arrays.update(optim_arrays)
        save_checkpoint(
            checkpoint_dir,
            arrays,
            {
                "kind": "adapter",
                "layout": layout.to_dict(),
                "latent_scale": latent_scale,
                "encoder_hash": davae_checkpoint.metadata["encoder_hash"],
                "ema_decay": ema.decay,
                "trained_steps": step,
                "optim_dit": optim_groups,
                "consumed": consumed,
                "ablation": {
                    "random_init": config.ablation.random_init,
                    "no_scheduler": config.ablation.no_scheduler,
                    "from_scratch": config.ablation.from_scratch,
                },
                "config_hash": config_hash(config),
                **_dit_metadata(source),
            },
        )

    batches = forever(
        make_loader(dataset, config.dit_optim.batch_size, streams.data_seed)
    )
    for _ in range(start):
        next(batches)
    null_id = adapter.null_id
    means = IntervalMeans()
    adapter.train()
    for n in range(start, config.dit_optim.total_steps):
        images_hr, labels = next(batches)
        image_base, image_hr = split_resolutions(images_hr.to(device), layout.scale)
        with torch.no_grad():
            latents = vae.encode(image_base, image_hr, streams.noise)
        x1 = StructuredLatent(
            latents.base * latent_scale, latents.detail * latent_scale
        )
        x0 = StructuredLatent(
            _randn_like(x1.base, streams.noise), _randn_like(x1.detail, streams.noise)
        )
        t = torch.rand(x1.base.shape[0], generator=streams.noise).to(device)
        x_t, target = make_velocity_target(x0, x1, t)
        y = _drop_labels(
            labels.to(device), null_id, config.schedule.label_dropout, streams.dropout
        )
        u_hat, u_hat_d = adapter(x_t.base, x_t.detail, t, y)
        w = loss_weight(schedule, n)
        loss = dit_loss(u_hat, u_hat_d, target, w, step=n)
        optimizer.zero_grad()
        loss.backward()
        nn.utils.clip_grad_norm_(adapter.parameters(), config.dit_optim.grad_clip)
        optimizer.step()
        ema_update(ema, adapter)

        with torch.no_grad():
            base_mse = float(F.mse_loss(u_hat, target.u))
            detail_mse = float(F.mse_loss(u_hat_d, target.u_d))
        means.add(dit_total=float(loss), dit_base=base_mse, dit_detail=detail_mse)
        if (n + 1) % config.logging.interval == 0:
            _log_row(
                writer,
                means,
                n + 1,
                "finetune_dit",
                config.dit_optim.learning_rate,
                w=w,
                ema=1,
            )
        if (n + 1) % config.logging.checkpoint_interval == 0:
            save(n + 1)

    save(config.dit_optim.total_steps)
    result.checkpoints["adapter"] = checkpoint_dir
    return result


def run_stage(
    config: TrainConfig, run_dir: str | Path, resume: str | Path | None = None
) -> StageResult:
    """Dispatch on ``config.stage``."""
    if config.stage == "pretrain_base_vae":
        if resume is not None:
            logger.warning("Pretraining does not resume; starting from scratch")
        return pretrain_base(config, run_dir)
    if config.stage == "train_davae":
        return train_davae(config, run_dir, resume)
    if config.stage == "finetune_dit":
        return finetune_dit(config, run_dir, resume)
    raise ValueError(f"Unknown stage '{config.stage}'")
