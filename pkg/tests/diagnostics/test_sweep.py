"""Tests for the alignment-weight sweep."""

import json
from dataclasses import replace
from pathlib import Path

import pytest

from detail_aligned_vae.diagnostics.sweep import sweep_align
from detail_aligned_vae.training.config import InitConfig, config_from_dict
from detail_aligned_vae.training.trainer import pretrain_base


@pytest.mark.slow
class TestSweepAlign:
    """Tests for sweep_align."""

    def test_one_run_per_weight(self, tmp_path: Path) -> None:
        """Test the per-weight runs and the written summary."""
        config = config_from_dict(
            {
                "stage": "pretrain_base_vae",
                "layout": {
                    "downsample": 2,
                    "patch_size": 1,
                    "base_channels": 2,
                    "detail_channels": 2,
                    "scale": 2,
                },
                "dataset": {"num_images": 4, "num_classes": 2, "hr_size": 16},
                "vae_optim": {"batch_size": 2, "total_steps": 1},
                "dit_optim": {"batch_size": 2, "total_steps": 1},
                "model": {"vae_width": 8, "dit_hidden_size": 16, "dit_depth": 1},
                "logging": {"interval": 1},
                "pretrain": {"vae_steps": 1, "dit_steps": 1, "scale_batches": 1},
            }
        )
        base = pretrain_base(config, tmp_path / "pretrain")
        config = replace(
            config, init=InitConfig(base_vae=str(base.checkpoints["base_vae"]))
        )

        summary = sweep_align(
            config, tmp_path / "sweep", weights=(0.0, 0.5), steps=1, max_images=2
        )
        assert summary["weights"] == [0.0, 0.5]
        assert [r["lambda_align"] for r in summary["results"]] == [0.0, 0.5]
        assert (tmp_path / "sweep" / "lambda_0" / "telemetry.csv").exists()
        assert (tmp_path / "sweep" / "lambda_0.5" / "telemetry.csv").exists()
        assert all(r["final_align"] is not None for r in summary["results"])
        written = json.loads(
            (tmp_path / "sweep" / "sweep_align.json").read_text(encoding="utf-8")
        )
        assert written == summary
