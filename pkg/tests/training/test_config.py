"""Tests for stage config loading, presets, overrides and the JSON schema."""

import json
import os
import tempfile
from pathlib import Path
from typing import Any
from unittest.mock import patch

import pytest

from detail_aligned_vae.core.errors import ConfigError
from detail_aligned_vae.core.latent import LatentLayout
from detail_aligned_vae.training.config import (
    RUN_ROOT_ENV,
    TrainConfig,
    apply_overrides,
    config_from_dict,
    config_hash,
    config_to_dict,
    json_schema,
    load_config,
    parse_override_value,
    run_root,
)


def write_json(directory: str, name: str, document: Any) -> Path:
    """Write a JSON document into ``directory`` and return its path."""
    path = Path(directory) / name
    path.write_text(json.dumps(document), encoding="utf-8")
    return path


class TestLoadConfig:
    """Tests for reading config files."""

    def test_missing_file(self) -> None:
        """Test that a missing config names the path."""
        with pytest.raises(ConfigError, match="Config file not found") as excinfo:
            load_config("/nonexistent/stage.json")
        assert "/nonexistent/stage.json" in str(excinfo.value)

    def test_invalid_json(self) -> None:
        """Test that malformed JSON raises a ConfigError."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "stage.json"
            path.write_text("{not json", encoding="utf-8")
            with pytest.raises(ConfigError, match="not valid JSON"):
                load_config(path)

    def test_minimal_config(self) -> None:
        """Test that only the stage is required."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = write_json(temp_dir, "stage.json", {"stage": "train_davae"})
            config = load_config(path)
        assert config.stage == "train_davae"
        assert config.layout == LatentLayout()
        assert config.vae_optim.betas == (0.5, 0.9)
        assert config.dit_optim.betas == (0.9, 0.95)
        assert config.base_size == 32
        assert config.latent_grid == (4, 4)

    def test_layout_file_relative_to_config(self) -> None:
        """Test that a layout path resolves next to the config file."""
        layout = {
            "downsample": 4,
            "patch_size": 2,
            "base_channels": 2,
            "detail_channels": 6,
            "scale": 2,
        }
        with tempfile.TemporaryDirectory() as temp_dir:
            write_json(temp_dir, "layout.json", layout)
            path = write_json(
                temp_dir,
                "stage.json",
                {"stage": "finetune_dit", "layout": "layout.json"},
            )
            config = load_config(path)
        assert config.layout == LatentLayout(**layout)

    def test_missing_layout_file(self) -> None:
        """Test that a missing layout file is reported on the layout field."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = write_json(
                temp_dir, "stage.json", {"stage": "train_davae", "layout": "x.json"}
            )
            with pytest.raises(ConfigError) as excinfo:
                load_config(path)
        assert excinfo.value.field == "layout"


class TestValidation:
    """Tests for schema validation with dotted field paths."""

    @pytest.mark.parametrize(
        "document,field",
        [
            ({}, "stage"),
            ({"stage": "train"}, "stage"),
            ({"stage": "train_davae", "learning_rate": 1e-4}, "learning_rate"),
            ({"stage": "train_davae", "loss": {"lambda_foo": 1}}, "loss.lambda_foo"),
            (
                {"stage": "train_davae", "vae_optim": {"batch_size": "16"}},
                "vae_optim.batch_size",
            ),
            (
                {"stage": "train_davae", "vae_optim": {"betas": [0.5, 1.0]}},
                "vae_optim.betas[1]",
            ),
            (
                {"stage": "train_davae", "vae_optim": {"betas": [0.5]}},
                "vae_optim.betas",
            ),
            ({"stage": "train_davae", "dataset": {"hr_size": 40}}, "dataset.hr_size"),
            ({"stage": "train_davae", "sampling": {"steps": 0}}, "sampling.steps"),
            (
                {"stage": "train_davae", "schedule": {"ema_decay": 1.0}},
                "schedule.ema_decay",
            ),
            ({"stage": "train_davae", "preset": "huge"}, "preset"),
            (
                {"stage": "train_davae", "dataset": {"kind": "folder"}},
                "dataset.path",
            ),
        ],
    )
    def test_field_paths(self, document: dict[str, Any], field: str) -> None:
        """Test that each invalid document names the offending field."""
        with pytest.raises(ConfigError) as excinfo:
            config_from_dict(document)
        assert excinfo.value.field == field

    def test_invalid_layout(self) -> None:
        """Test that layout errors surface as config errors on the layout."""
        with pytest.raises(ConfigError, match="multiple") as excinfo:
            config_from_dict(
                {
                    "stage": "train_davae",
                    "layout": {"base_channels": 4, "detail_channels": 6},
                }
            )
        assert excinfo.value.field == "layout"

    def test_patch_size_must_divide_grid(self) -> None:
        """Test that the latent grid must divide by the patch size."""
        with pytest.raises(ConfigError) as excinfo:
            config_from_dict(
                {
                    "stage": "finetune_dit",
                    "layout": {"patch_size": 3},
                    "dataset": {"hr_size": 64},
                }
            )
        assert excinfo.value.field == "layout.patch_size"

    def test_integer_accepted_for_float(self) -> None:
        """Test that integers are accepted where floats are expected."""
        config = config_from_dict({"stage": "train_davae", "loss": {"lambda_l1": 2}})
        assert config.loss.lambda_l1 == 2.0
        assert isinstance(config.loss.lambda_l1, float)


class TestPresets:
    """Tests for preset defaults."""

    def test_explicit_keys_override_preset(self) -> None:
        """Test that explicit values win over the preset."""
        config = config_from_dict(
            {
                "stage": "train_davae",
                "preset": "class_conditional",
                "loss": {"lambda_align": 0.25},
            }
        )
        assert config.loss.lambda_adv == 0.1
        assert config.loss.lambda_align == 0.25
        assert config.schedule.n_warm == 10000
        assert config.sampling.guidance_scale == 4.0

    def test_text_to_image_analog(self) -> None:
        """Test the text-to-image analog sampling defaults."""
        config = config_from_dict(
            {"stage": "finetune_dit", "preset": "text_to_image_analog"}
        )
        assert config.sampling.steps == 30
        assert config.sampling.guidance_scale == 2.5
        assert config.sampling.timestep_shift == 1.0
        assert config.vae_optim.betas == (0.9, 0.999)


REFERENCE_DIR = Path(__file__).resolve().parents[2] / "configs"
REFERENCE_CONFIGS = {
    "pretrain.json": "pretrain_base_vae",
    "train_vae.json": "train_davae",
    "finetune.json": "finetune_dit",
}


class TestReferenceConfigs:
    """Tests for the shipped desk-run configs."""

    @pytest.mark.parametrize(
        "name,stage", sorted(REFERENCE_CONFIGS.items())
    )  # type: ignore[misc]
    def test_loads(self, name: str, stage: str) -> None:
        """Test that each shipped config validates for its stage."""
        config = load_config(REFERENCE_DIR / name)
        assert config.stage == stage
        assert config.preset == "class_conditional"
        assert config.layout == LatentLayout(
            downsample=8, patch_size=1, base_channels=2, detail_channels=6, scale=2
        )
        assert config.dataset.kind == "procedural"
        assert (config.dataset.hr_size, config.base_size) == (64, 32)
        assert config.loss.lambda_align == 0.5
        assert config.loss.lambda_adv == 0.0

    def test_stages_agree(self) -> None:
        """Test that the three stages share data, layout and model widths."""
        configs = [load_config(REFERENCE_DIR / name) for name in REFERENCE_CONFIGS]
        assert len({config.dataset for config in configs}) == 1
        assert len({config.layout for config in configs}) == 1
        assert len({config.model for config in configs}) == 1
        assert len({config.seed for config in configs}) == 1

    def test_finetune_schedule(self) -> None:
        """Test the desk-scaled warm-up and per-step telemetry of fine-tuning."""
        config = load_config(REFERENCE_DIR / "finetune.json")
        assert config.schedule.n_warm == 2000
        assert config.schedule.n_warm < config.dit_optim.total_steps
        assert config.logging.interval == 1
        assert config.logging.smoothing_window == 50
        assert config.sampling.guidance_scale == 4.0


class TestOverrides:
    """Tests for dotted-key overrides."""

    def test_override_values_are_json(self) -> None:
        """Test JSON parsing of override values."""
        assert parse_override_value("200") == 200
        assert parse_override_value("[0.5, 0.9]") == [0.5, 0.9]
        assert parse_override_value("true") is True
        assert parse_override_value("cuda") == "cuda"

    def test_apply_overrides(self) -> None:
        """Test that overrides create nested keys without touching the input."""
        document: dict[str, Any] = {"stage": "train_davae"}
        result = apply_overrides(
            document, {"schedule.n_warm": "200", "vae_optim.betas": "[0.5,0.8]"}
        )
        assert document == {"stage": "train_davae"}
        assert result["schedule"] == {"n_warm": 200}
        config = config_from_dict(result)
        assert config.vae_optim.betas == (0.5, 0.8)

    def test_override_through_scalar(self) -> None:
        """Test that a dotted key cannot descend into a scalar."""
        with pytest.raises(ConfigError) as excinfo:
            apply_overrides({"seed": 3}, {"seed.x": "1"})
        assert excinfo.value.field == "seed"

    def test_overrides_apply_after_preset(self) -> None:
        """Test that command-line overrides beat preset values."""
        config = config_from_dict(
            {"stage": "train_davae", "preset": "class_conditional"},
            {"loss.lambda_adv": "0"},
        )
        assert config.loss.lambda_adv == 0.0


class TestHashAndSchema:
    """Tests for config hashing and the JSON schema."""

    def test_hash_is_stable(self) -> None:
        """Test that equal configs hash equally and different ones do not."""
        first = TrainConfig(stage="train_davae")
        second = config_from_dict({"stage": "train_davae"})
        assert config_hash(first) == config_hash(second)
        other = TrainConfig(stage="train_davae", seed=1)
        assert config_hash(first) != config_hash(other)

    def test_config_to_dict_round_trip(self) -> None:
        """Test that the dict view loads back into an equal config."""
        config = config_from_dict(
            {"stage": "finetune_dit", "preset": "class_conditional"}
        )
        assert config_from_dict(config_to_dict(config)) == config

    def test_schema(self) -> None:
        """Test the structure of the JSON schema."""
        schema = json_schema()
        assert schema["$schema"].endswith("2020-12/schema")
        assert schema["additionalProperties"] is False
        assert schema["required"] == ["stage"]
        properties = schema["properties"]
        assert properties["stage"]["enum"] == [
            "pretrain_base_vae",
            "train_davae",
            "finetune_dit",
        ]
        assert properties["vae_optim"]["properties"]["betas"]["maxItems"] == 2
        assert {"type": "string"} in properties["layout"]["anyOf"]
        json.dumps(schema)

    def test_run_root_from_environment(self) -> None:
        """Test that the run root honours the environment variable."""
        with patch.dict(os.environ, {RUN_ROOT_ENV: "/tmp/davae-runs"}):
            assert run_root() == Path("/tmp/davae-runs")
        with patch.dict(os.environ, {}, clear=True):
            assert run_root() == Path("runs")
