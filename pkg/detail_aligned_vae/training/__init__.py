"""Stage configuration, data, checkpoints, telemetry and the stage drivers."""

from .checkpoint import Checkpoint, checkpoint_hash, load_checkpoint, save_checkpoint
from .config import PRESETS, STAGES, TrainConfig, json_schema, load_config
from .data import ImageFolderDataset, ProceduralDataset, make_dataset, make_loader
from .ema import EmaState, ema_update
from .telemetry import TelemetryRecord, TelemetryWriter, read_telemetry
from .trainer import (
    StageResult,
    finetune_dit,
    pretrain_base,
    run_stage,
    train_davae,
    write_report,
)

__all__ = [
    "PRESETS",
    "STAGES",
    "Checkpoint",
    "EmaState",
    "ImageFolderDataset",
    "ProceduralDataset",
    "StageResult",
    "TelemetryRecord",
    "TelemetryWriter",
    "TrainConfig",
    "checkpoint_hash",
    "ema_update",
    "finetune_dit",
    "json_schema",
    "load_checkpoint",
    "load_config",
    "make_dataset",
    "make_loader",
    "pretrain_base",
    "read_telemetry",
    "run_stage",
    "save_checkpoint",
    "train_davae",
    "write_report",
]
