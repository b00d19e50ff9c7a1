"""Stage configuration: frozen dataclasses loaded from one JSON document.

A document may name a ``preset``; its values are applied first and explicit
keys override them. ``layout`` may be an inline object or a path to a shared
layout JSON, resolved relative to the config file. Unknown keys, wrong types
and out-of-range values raise :class:`ConfigError` carrying the dotted path
of the offending field.
"""

import copy
import hashlib
import json
import os
import types
from collections.abc import Mapping
from dataclasses import MISSING, asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Union, get_args, get_origin, get_type_hints

from ..core.errors import ConfigError
from ..core.latent import LatentLayout
from ..models.flow import SamplerConfig
from ..models.losses import VaeLossWeights

STAGES = ("pretrain_base_vae", "train_davae", "finetune_dit")
RUN_ROOT_ENV = "DAVAE_RUN_ROOT"
DEFAULT_RUN_ROOT = "runs"

POSITIVE = {"exclusiveMinimum": 0.0}
POSITIVE_INT = {"minimum": 1}
UNIT_INTERVAL = {"minimum": 0.0, "maximum": 1.0}


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = field(default="procedural", metadata={"enum": ["procedural", "folder"]})
    path: str | None = None
    num_images: int = field(default=256, metadata=POSITIVE_INT)
    num_classes: int = field(default=10, metadata=POSITIVE_INT)
    hr_size: int = field(default=64, metadata={"minimum": 2})
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind == "folder" and not self.path:
            raise ConfigError("path", "a folder dataset needs a path")


@dataclass(frozen=True)
class OptimConfig:
    """AdamW settings of one network, with global-norm gradient clipping."""

    learning_rate: float = field(default=1e-4, metadata=POSITIVE)
    betas: tuple[float, float] = field(
        default=(0.5, 0.9), metadata={"minimum": 0.0, "exclusiveMaximum": 1.0}
    )
    weight_decay: float = field(default=0.0, metadata={"minimum": 0.0})
    batch_size: int = field(default=16, metadata=POSITIVE_INT)
    total_steps: int = field(default=2000, metadata=POSITIVE_INT)
    grad_clip: float = field(default=1.0, metadata=POSITIVE)


@dataclass(frozen=True)
class ScheduleConfig:
    n_warm: int = field(default=500, metadata=POSITIVE_INT)
    ema_decay: float = field(
        default=0.999, metadata={"minimum": 0.0, "exclusiveMaximum": 1.0}
    )
    label_dropout: float = field(default=0.1, metadata=UNIT_INTERVAL)


@dataclass(frozen=True)
class ModelConfig:
    vae_width: int = field(default=64, metadata=POSITIVE_INT)
    dit_hidden_size: int = field(default=256, metadata=POSITIVE_INT)
    dit_depth: int = field(default=6, metadata=POSITIVE_INT)
    dit_heads: int = field(default=4, metadata=POSITIVE_INT)
    disc_width: int = field(default=64, metadata=POSITIVE_INT)
    disc_layers: int = field(default=3, metadata=POSITIVE_INT)
    perceptual_seed: int = 0


@dataclass(frozen=True)
class InitConfig:
    """Checkpoint directories consumed by a stage."""

    base_vae: str | None = None
    base_dit: str | None = None
    davae: str | None = None


@dataclass(frozen=True)
class LoggingConfig:
    interval: int = field(default=50, metadata=POSITIVE_INT)
    checkpoint_interval: int = field(default=500, metadata=POSITIVE_INT)
    wallclock: bool = False
    smoothing_window: int = field(default=50, metadata=POSITIVE_INT)


@dataclass(frozen=True)
class PretrainConfig:
    vae_steps: int = field(default=1000, metadata=POSITIVE_INT)
    dit_steps: int = field(default=1000, metadata=POSITIVE_INT)
    lambda_kl: float = field(default=1e-6, metadata={"minimum": 0.0})
    scale_batches: int = field(default=8, metadata=POSITIVE_INT)


@dataclass(frozen=True)
class AblationConfig:
    no_alignment: bool = False
    random_init: bool = False
    no_scheduler: bool = False
    from_scratch: bool = False


@dataclass(frozen=True)
class TrainConfig:
    stage: str = field(metadata={"enum": list(STAGES)})
    preset: str | None = None
    seed: int = 0
    device: str = "cpu"
    layout: LatentLayout = field(default_factory=LatentLayout)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    vae_optim: OptimConfig = field(default_factory=OptimConfig)
    dit_optim: OptimConfig = field(
        default_factory=lambda: OptimConfig(
            learning_rate=2e-4, betas=(0.9, 0.95), batch_size=32
        )
    )
    loss: VaeLossWeights = field(default_factory=VaeLossWeights)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    init: InitConfig = field(default_factory=InitConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    sampling: SamplerConfig = field(default_factory=SamplerConfig)

    def __post_init__(self) -> None:
        if self.preset is not None and self.preset not in PRESETS:
            raise ConfigError(
                "preset",
                f"unknown preset '{self.preset}', expected one of {sorted(PRESETS)}",
            )
        factor = self.layout.downsample * self.layout.scale
        if self.dataset.hr_size % factor:
            raise ConfigError(
                "dataset.hr_size",
                f"{self.dataset.hr_size} is not divisible by s*f = {factor}",
            )
        grid = self.dataset.hr_size // factor
        if grid % self.layout.patch_size:
            raise ConfigError(
                "layout.patch_size",
                f"latent grid {grid} is not divisible by patch size "
                f"{self.layout.patch_size}",
            )

    @property
    def base_size(self) -> int:
        return self.dataset.hr_size // self.layout.scale

    @property
    def latent_grid(self) -> tuple[int, int]:
        return self.layout.latent_grid(self.base_size, self.base_size)


PRESETS: dict[str, dict[str, Any]] = {
    "class_conditional": {
        "vae_optim": {"learning_rate": 1e-4, "betas": [0.5, 0.9]},
        "dit_optim": {"learning_rate": 2e-4, "betas": [0.9, 0.95]},
        "loss": {
            "lambda_lpips": 1.0,
            "lambda_l1": 1.0,
            "lambda_adv": 0.1,
            "lambda_kl": 1e-6,
            "lambda_align": 0.5,
        },
        "schedule": {"n_warm": 10000, "ema_decay": 0.999},
        "sampling": {
            "steps": 250,
            "guidance_scale": 4.0,
            "cfg_interval_start": 0.2,
            "timestep_shift": 0.3,
        },
    },
    "text_to_image_analog": {
        "vae_optim": {"learning_rate": 1e-4, "betas": [0.9, 0.999]},
        "dit_optim": {"learning_rate": 1e-4, "betas": [0.9, 0.999]},
        "loss": {
            "lambda_lpips": 1.0,
            "lambda_l1": 2.0,
            "lambda_adv": 0.1,
            "lambda_kl": 1e-7,
            "lambda_align": 1.0,
        },
        "schedule": {"n_warm": 5000, "ema_decay": 0.999},
        "sampling": {
            "steps": 30,
            "guidance_scale": 2.5,
            "cfg_interval_start": 0.0,
            "timestep_shift": 1.0,
        },
    },
}


def _join(path: str, name: str) -> str:
    if not path:
        return name
    if not name:
        return path
    return f"{path}{name}" if name.startswith("[") else f"{path}.{name}"


def _type_name(value: Any) -> str:
    return "null" if value is None else type(value).__name__


def _check_constraints(value: Any, metadata: Mapping[str, Any], path: str) -> None:
    if "enum" in metadata and value not in metadata["enum"]:
        raise ConfigError(path, f"'{value}' is not one of {metadata['enum']}")
    bounds = (
        ("minimum", lambda v, b: v >= b, ">="),
        ("exclusiveMinimum", lambda v, b: v > b, ">"),
        ("maximum", lambda v, b: v <= b, "<="),
        ("exclusiveMaximum", lambda v, b: v < b, "<"),
    )
    for key, ok, symbol in bounds:
        if key in metadata and not ok(value, metadata[key]):
            raise ConfigError(path, f"{value} must be {symbol} {metadata[key]}")


def _coerce(tp: Any, value: Any, path: str, metadata: Mapping[str, Any]) -> Any:
    origin = get_origin(tp)
    if is_dataclass(tp) and isinstance(tp, type):
        return _build(tp, value, path)
    if origin in (Union, types.UnionType):
        options = [arg for arg in get_args(tp) if arg is not type(None)]
        if value is None and len(options) < len(get_args(tp)):
            return None
        return _coerce(options[0], value, path, metadata)
    if origin is tuple:
        items = get_args(tp)
        if not isinstance(value, list | tuple) or len(value) != len(items):
            raise ConfigError(path, f"expected a list of {len(items)} values")
        return tuple(
            _coerce(item, element, f"{path}[{index}]", metadata)
            for index, (item, element) in enumerate(zip(items, value, strict=True))
        )
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {_type_name(value)}")
        return value
    if tp is int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(path, f"expected an integer, got {_type_name(value)}")
        _check_constraints(value, metadata, path)
        return value
    if tp is float:
        if not isinstance(value, int | float) or isinstance(value, bool):
            raise ConfigError(path, f"expected a number, got {_type_name(value)}")
        _check_constraints(float(value), metadata, path)
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {_type_name(value)}")
        _check_constraints(value, metadata, path)
        return value
    raise TypeError(f"Unsupported config type {tp!r} at {path}")


def _build(cls: type, data: Any, path: str = "") -> Any:
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected an object, got {_type_name(data)}")
    hints = get_type_hints(cls)
    known = {f.name: f for f in fields(cls) if f.init}
    for name in sorted(data):
        if name not in known:
            raise ConfigError(_join(path, name), "unknown key")
    kwargs = {
        name: _coerce(hints[name], value, _join(path, name), known[name].metadata)
        for name, value in data.items()
    }
    missing = [
        name
        for name, f in known.items()
        if name not in kwargs and f.default is MISSING and f.default_factory is MISSING
    ]
    if missing:
        raise ConfigError(_join(path, missing[0]), "required key is missing")
    try:
        return cls(**kwargs)
    except ConfigError as e:
        raise ConfigError(_join(path, e.field), e.message) from e
    except ValueError as e:
        raise ConfigError(path, str(e)) from e


def _deep_merge(base: dict[str, Any], update: Mapping[str, Any]) -> dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def parse_override_value(text: str) -> Any:
    """JSON-typed override value; anything that is not JSON is a string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(
    document: dict[str, Any], overrides: Mapping[str, Any]
) -> dict[str, Any]:
    """Set dotted keys (``schedule.n_warm``) on a copy of ``document``."""
    result = copy.deepcopy(document)
    for dotted, value in overrides.items():
        parts = dotted.split(".")
        node = result
        for index, part in enumerate(parts[:-1]):
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(".".join(parts[: index + 1]), "is not an object")
            node = child
        node[parts[-1]] = (
            parse_override_value(value) if isinstance(value, str) else value
        )
    return result


def _read_json(path: Path, field_name: str) -> Any:
    if not path.is_file():
        raise ConfigError(field_name, f"file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(field_name, f"{path} is not valid JSON: {e}") from e


def config_from_dict(
    document: Mapping[str, Any],
    overrides: Mapping[str, Any] | None = None,
    base_dir: Path | None = None,
) -> TrainConfig:
    """Validate a config document (preset, overrides and layout file applied)."""
    document = dict(document)
    preset = document.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(
                "preset",
                f"unknown preset '{preset}', expected one of {sorted(PRESETS)}",
            )
        document = _deep_merge(PRESETS[preset], document)
    if overrides:
        document = apply_overrides(document, overrides)
    layout = document.get("layout")
    if isinstance(layout, str):
        layout_path = Path(layout)
        if not layout_path.is_absolute() and base_dir is not None:
            layout_path = base_dir / layout_path
        document["layout"] = _read_json(layout_path, "layout")
    config: TrainConfig = _build(TrainConfig, document)
    return config


def load_config(
    path: str | Path, overrides: Mapping[str, Any] | None = None
) -> TrainConfig:
    """Load and validate a stage config file.

    Raises:
        ConfigError: If the file is missing, not JSON or violates the schema
    """
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigError("", f"Config file not found: {config_path}")
    document = _read_json(config_path, "")
    return config_from_dict(document, overrides, config_path.parent)


def config_to_dict(config: Any) -> dict[str, Any]:
    """JSON-able view of a config; tuples become lists."""
    converted: dict[str, Any] = json.loads(json.dumps(asdict(config)))
    return converted


def config_hash(config: TrainConfig) -> str:
    canonical = json.dumps(
        config_to_dict(config), sort_keys=True, separators=(",", ":")
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _schema_for(tp: Any, metadata: Mapping[str, Any]) -> dict[str, Any]:
    origin = get_origin(tp)
    if is_dataclass(tp) and isinstance(tp, type):
        return _object_schema(tp)
    if origin in (Union, types.UnionType):
        options = [arg for arg in get_args(tp) if arg is not type(None)]
        return {"anyOf": [_schema_for(options[0], metadata), {"type": "null"}]}
    if origin is tuple:
        items = [_schema_for(item, metadata) for item in get_args(tp)]
        return {
            "type": "array",
            "prefixItems": items,
            "minItems": len(items),
            "maxItems": len(items),
        }
    schema: dict[str, Any] = {
        bool: {"type": "boolean"},
        int: {"type": "integer"},
        float: {"type": "number"},
        str: {"type": "string"},
    }[tp]
    schema = dict(schema)
    schema.update(metadata)
    return schema


def _object_schema(cls: type) -> dict[str, Any]:
    hints = get_type_hints(cls)
    properties: dict[str, Any] = {}
    required = []
    for f in fields(cls):
        schema = _schema_for(hints[f.name], f.metadata)
        if f.default is not MISSING:
            default = f.default
            schema["default"] = list(default) if isinstance(default, tuple) else default
        elif f.default_factory is MISSING:
            required.append(f.name)
        properties[f.name] = schema
    result: dict[str, Any] = {
        "type": "object",
        "additionalProperties": False,
        "properties": properties,
    }
    if required:
        result["required"] = required
    return result


def json_schema() -> dict[str, Any]:
    """JSON Schema (draft 2020-12) of a stage config document."""
    schema = _object_schema(TrainConfig)
    schema["properties"]["layout"] = {
        "anyOf": [schema["properties"]["layout"], {"type": "string"}]
    }
    schema["properties"]["preset"] = {
        "anyOf": [{"type": "string", "enum": sorted(PRESETS)}, {"type": "null"}],
        "default": None,
    }
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "davae stage config",
        **schema,
    }


def run_root() -> Path:
    return Path(os.environ.get(RUN_ROOT_ENV, DEFAULT_RUN_ROOT))
