"""Tests for the davae command-line tool."""

import json
from argparse import ArgumentTypeError, Namespace
from pathlib import Path
from typing import Any
from unittest.mock import MagicMock, patch

import pytest
import torch

from detail_aligned_vae.cli.main import (
    EXIT_FAILURE,
    EXIT_USAGE,
    MANIFEST_NAME,
    ParseDict,
    _ablation_grid,
    build_parser,
    main,
    new_run_dir,
)
from detail_aligned_vae.core.latent import LatentLayout
from detail_aligned_vae.models.tokenizer import VaeModel

TINY_CONFIG: dict[str, Any] = {
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

EVAL_DATA = ["--num-images", "4", "--num-classes", "2", "--hr-size", "16"]
EVAL_DATA += ["--batch-size", "2", "--max-images", "4"]


@pytest.fixture  # type: ignore[misc]
def run_root(tmp_path: Path) -> Any:
    """Point the run root at a temporary directory."""
    root = tmp_path / "runs"
    with patch.dict("os.environ", {"DAVAE_RUN_ROOT": str(root)}):
        yield root


def manifest_for(root: Path, command: str) -> dict[str, Any]:
    """The single run manifest written by ``command`` under ``root``."""
    manifests = [
        json.loads(path.read_text(encoding="utf-8"))
        for path in sorted(root.glob(f"*/{MANIFEST_NAME}"))
    ]
    matching = [m for m in manifests if m["command"] == command]
    assert len(matching) == 1
    return matching[0]


def write_config(path: Path, **changes: Any) -> Path:
    """Write the tiny config with top-level ``changes`` applied."""
    path.write_text(json.dumps({**TINY_CONFIG, **changes}), encoding="utf-8")
    return path


class TestParseDict:
    """Tests for the ParseDict action."""

    @pytest.fixture  # type: ignore[misc]
    def mock_parser(self) -> Any:
        """Create a mock ArgumentParser for testing."""
        return MagicMock(spec=["ArgumentParser"])

    def test_json_values(self, mock_parser: Any) -> None:
        """Test that values are parsed as JSON, falling back to strings."""
        action = ParseDict("--set", dest="overrides")
        namespace = Namespace()
        action(
            mock_parser,
            namespace,
            ["schedule.n_warm=200", "ablation.random_init=true", "init.davae=/x/y"],
        )
        assert namespace.overrides == {
            "schedule.n_warm": 200,
            "ablation.random_init": True,
            "init.davae": "/x/y",
        }

    def test_value_may_contain_equals(self, mock_parser: Any) -> None:
        """Test that only the first '=' separates key and value."""
        action = ParseDict("--set", dest="overrides")
        namespace = Namespace()
        action(mock_parser, namespace, ["dataset.path=a=b"])
        assert namespace.overrides == {"dataset.path": "a=b"}

    def test_invalid_format(self, mock_parser: Any) -> None:
        """Test that a value without '=' is refused."""
        action = ParseDict("--set", dest="overrides")
        with pytest.raises(ArgumentTypeError, match="key=value"):
            action(mock_parser, Namespace(), ["schedule.n_warm"])

    def test_parser_integration(self) -> None:
        """Test --set on a subcommand."""
        args = build_parser().parse_args(
            ["pretrain", "config.json", "--set", "seed=3", "device=cpu"]
        )
        assert args.overrides == {"seed": 3, "device": "cpu"}


class TestRunDirectories:
    """Tests for run directory creation."""

    def test_new_run_dir_is_never_reused(self, run_root: Path) -> None:
        """Test that two runs in the same second get distinct directories."""
        first = new_run_dir("eval")
        second = new_run_dir("eval")
        assert first != second
        assert first.parent == second.parent == run_root
        assert first.name.endswith("-eval")


class TestMain:
    """Tests for the main entry point and error handling."""

    def test_missing_config_is_usage_error(
        self, run_root: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        """Test that a missing config exits with code 2 and names the path."""
        with pytest.raises(SystemExit) as excinfo:
            main(["pretrain", "/nonexistent/stage.json"])
        assert excinfo.value.code == EXIT_USAGE
        assert "/nonexistent/stage.json" in capsys.readouterr().err
        assert not run_root.exists()

    def test_stage_mismatch(self, run_root: Path, tmp_path: Path) -> None:
        """Test that a config for another stage is refused."""
        config = write_config(tmp_path / "davae.json", stage="train_davae")
        with pytest.raises(SystemExit) as excinfo:
            main(["pretrain", str(config)])
        assert excinfo.value.code == EXIT_USAGE

    def test_invalid_field_is_usage_error(
        self, run_root: Path, tmp_path: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        """Test that schema violations name the offending field."""
        config = write_config(tmp_path / "bad.json")
        with pytest.raises(SystemExit) as excinfo:
            main(["pretrain", str(config), "--set", "dit_optim.total_steps=0"])
        assert excinfo.value.code == EXIT_USAGE
        assert "dit_optim.total_steps" in capsys.readouterr().err

    def test_schema(self, capsys: pytest.CaptureFixture[str]) -> None:
        """Test that the schema command prints a JSON schema."""
        main(["schema"])
        schema = json.loads(capsys.readouterr().out)
        assert "stage" in schema["properties"]
        assert "layout" in schema["properties"]

    def test_eval_identity(self, run_root: Path) -> None:
        """Test the no-model evaluation: PSNR cap and SSIM 1 for every image."""
        main(["eval", "--identity", *EVAL_DATA])
        manifest = manifest_for(run_root, "eval")
        assert manifest["status"] == "complete"
        report = json.loads(Path(manifest["outputs"]["report"]).read_text())
        assert report["mode"] == "identity"
        assert report["num_images"] == 4
        assert report["aggregate"]["psnr"] == 99.0
        assert report["aggregate"]["ssim"] == pytest.approx(1.0, abs=1e-6)
        assert report["aggregate"]["perceptual_distance"] == 0.0

    def test_eval_needs_model(self, run_root: Path) -> None:
        """Test that eval without a model or --identity is a usage error."""
        with pytest.raises(SystemExit) as excinfo:
            main(["eval", *EVAL_DATA])
        assert excinfo.value.code == EXIT_USAGE

    def test_missing_model_creates_no_run(
        self, run_root: Path, tmp_path: Path
    ) -> None:
        """Test that a missing checkpoint fails before a run directory exists."""
        for command in ("eval", "spectrum", "ablate"):
            with pytest.raises(SystemExit) as excinfo:
                main([command, str(tmp_path / "missing"), *EVAL_DATA])
            assert excinfo.value.code == EXIT_FAILURE
        assert not run_root.exists()

    def test_missing_upstream_checkpoint_creates_no_run(
        self, run_root: Path, tmp_path: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        """Test that train-vae checks init.base_vae before creating its run."""
        config = write_config(tmp_path / "davae.json", stage="train_davae")
        with pytest.raises(SystemExit) as excinfo:
            main(["train-vae", str(config)])
        assert excinfo.value.code == EXIT_FAILURE
        assert "init.base_vae" in capsys.readouterr().err
        with pytest.raises(SystemExit):
            main(["plot", str(tmp_path / "missing.csv")])
        assert not run_root.exists()

    def test_keyboard_interrupt(self) -> None:
        """Test main function handling KeyboardInterrupt."""
        with patch("detail_aligned_vae.cli.main.davae") as mock_func:
            mock_func.side_effect = KeyboardInterrupt()
            with patch("sys.exit") as mock_exit:
                main([])
                mock_exit.assert_called_once_with(EXIT_FAILURE)

    def test_exception(self) -> None:
        """Test main function handling general exceptions."""
        with patch("detail_aligned_vae.cli.main.davae") as mock_func:
            mock_func.side_effect = RuntimeError("Test error")
            with patch("sys.exit") as mock_exit:
                with patch("sys.stderr"):
                    main([])
                    mock_exit.assert_called_once_with(EXIT_FAILURE)


@pytest.mark.slow
class TestPipeline:
    """Runs every subcommand on a tiny configuration."""

    def test_full_pipeline(self, run_root: Path, tmp_path: Path) -> None:
        """Test pretrain, train-vae, finetune, eval, spectrum, ablate, sample, plot."""
        main(["pretrain", str(write_config(tmp_path / "pretrain.json"))])
        pretrain = manifest_for(run_root, "pretrain")
        assert pretrain["status"] == "complete"
        base_vae = pretrain["outputs"]["base_vae"]
        base_dit = pretrain["outputs"]["base_dit"]

        davae_config = write_config(tmp_path / "davae.json", stage="train_davae")
        main(["train-vae", str(davae_config), "--set", f"init.base_vae={base_vae}"])
        train = manifest_for(run_root, "train-vae")
        davae = train["outputs"]["davae"]
        assert set(train["consumed"]) == {"base_vae"}

        finetune_config = write_config(tmp_path / "ft.json", stage="finetune_dit")
        main(
            [
                "finetune",
                str(finetune_config),
                "--set",
                f"init.davae={davae}",
                f"init.base_dit={base_dit}",
            ]
        )
        finetune = manifest_for(run_root, "finetune")
        equivalence = json.loads(Path(finetune["outputs"]["equivalence"]).read_text())
        assert equivalence["passed"] is True

        main(["eval", davae, *EVAL_DATA])
        assert manifest_for(run_root, "eval")["inputs"] == {"model": davae}

        main(["spectrum", davae, *EVAL_DATA])
        spectrum = manifest_for(run_root, "spectrum")["outputs"]
        assert Path(spectrum["spectrum_plot"]).exists()
        points = json.loads(Path(spectrum["embedding"]).read_text())
        assert len(points) == 4

        main(["ablate", davae, *EVAL_DATA, "--no-plots"])
        ablate = manifest_for(run_root, "ablate")["outputs"]
        assert set(ablate) == {"full", "zero_detail", "random_detail"}

        main(
            [
                "sample",
                finetune["outputs"]["adapter"],
                "--vae",
                davae,
                "--labels",
                "0",
                "1",
                "--steps",
                "2",
                "--no-plots",
            ]
        )
        samples = Path(manifest_for(run_root, "sample")["outputs"]["samples"])
        assert sorted(p.name for p in samples.iterdir()) == [
            "0000_class0.png",
            "0001_class1.png",
        ]

        main(["plot", train["outputs"]["telemetry"], "--stage", "train_davae"])
        plot = manifest_for(run_root, "plot")
        assert Path(plot["outputs"]["vae_losses"]).exists()


class TestAblationGrid:
    """Tests for the zero/random detail image grid."""

    def test_rows_follow_the_model(self, tmp_path: Path) -> None:
        """Test that every row is decoded on the model's device and dtype."""
        layout = LatentLayout(
            downsample=2, patch_size=1, base_channels=2, detail_channels=2, scale=2
        )
        vae = VaeModel(layout, width=8).eval()
        images = torch.rand(2, 3, 16, 16) * 2 - 1
        loader = [(images, torch.zeros(2, dtype=torch.long))]
        with patch("detail_aligned_vae.cli.main.plot_image_grid") as mock_grid:
            mock_grid.return_value = tmp_path / "ablate.png"
            _ablation_grid(vae, loader, seed=0, output=tmp_path / "ablate.png")
        rows = mock_grid.call_args.args[0]
        assert list(rows) == ["input", "full", "zero_detail", "random_detail"]
        device = next(vae.parameters()).device
        for batch in rows.values():
            assert batch.shape == (2, 3, 16, 16)
            assert batch.device == device
        assert not torch.equal(rows["zero_detail"], rows["random_detail"])
