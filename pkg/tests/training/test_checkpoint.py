"""Tests for the checkpoint codec."""

import json
import tempfile
from pathlib import Path

import pytest
import torch
from torch import nn

from detail_aligned_vae.core.errors import CheckpointError, MissingArtifactError
from detail_aligned_vae.training.checkpoint import (
    MANIFEST_NAME,
    checkpoint_hash,
    load_checkpoint,
    load_module,
    module_arrays,
    optimizer_arrays,
    restore_optimizer,
    save_checkpoint,
    state_hash,
)


def sample_arrays() -> dict[str, torch.Tensor]:
    """A few named float arrays of different shapes."""
    generator = torch.Generator().manual_seed(0)
    return {
        "model.weight": torch.randn(3, 4, generator=generator),
        "model.bias": torch.randn(3, generator=generator),
        "scalar": torch.tensor(2.5),
    }


def blob_path(directory: Path) -> Path:
    """Path of the array blob named by the manifest."""
    manifest = json.loads((directory / MANIFEST_NAME).read_text(encoding="utf-8"))
    return directory / manifest["blob"]


class TestSaveLoad:
    """Tests for writing and reading checkpoints."""

    def test_round_trip(self) -> None:
        """Test that arrays and metadata survive a save/load cycle."""
        arrays = sample_arrays()
        with tempfile.TemporaryDirectory() as temp_dir:
            save_checkpoint(temp_dir, arrays, {"kind": "test", "steps": 3})
            checkpoint = load_checkpoint(temp_dir)
        assert list(checkpoint.arrays) == list(arrays)
        for name, value in arrays.items():
            assert torch.equal(checkpoint.arrays[name], value)
        assert checkpoint.arrays["scalar"].shape == ()
        assert checkpoint.metadata == {"kind": "test", "steps": 3}

    def test_resave_is_byte_identical(self) -> None:
        """Test that saving a loaded checkpoint reproduces both files."""
        with tempfile.TemporaryDirectory() as temp_dir:
            first = Path(temp_dir) / "first"
            second = Path(temp_dir) / "second"
            save_checkpoint(first, sample_arrays(), {"note": "x"})
            loaded = load_checkpoint(first)
            save_checkpoint(second, loaded.arrays, loaded.metadata)
            assert (first / MANIFEST_NAME).read_bytes() == (
                second / MANIFEST_NAME
            ).read_bytes()
            assert blob_path(first).read_bytes() == blob_path(second).read_bytes()
            assert checkpoint_hash(first) == checkpoint_hash(second)

    def test_subset(self) -> None:
        """Test selecting arrays by prefix."""
        with tempfile.TemporaryDirectory() as temp_dir:
            save_checkpoint(temp_dir, sample_arrays())
            checkpoint = load_checkpoint(temp_dir)
        assert sorted(checkpoint.subset("model")) == ["bias", "weight"]

    def test_overwrite_removes_stale_blob(self) -> None:
        """Test that re-saving into a directory leaves a single blob."""
        with tempfile.TemporaryDirectory() as temp_dir:
            save_checkpoint(temp_dir, {"a": torch.zeros(2)})
            save_checkpoint(temp_dir, {"a": torch.ones(2)})
            blobs = list(Path(temp_dir).glob("arrays-*.bin"))
            assert len(blobs) == 1
            assert torch.equal(load_checkpoint(temp_dir).arrays["a"], torch.ones(2))

    def test_integer_arrays_rejected(self) -> None:
        """Test that only float arrays can be stored."""
        with tempfile.TemporaryDirectory() as temp_dir:
            with pytest.raises(CheckpointError, match="only float"):
                save_checkpoint(temp_dir, {"ids": torch.arange(3)})


class TestCorruption:
    """Tests for integrity checks on load."""

    def test_flipped_byte_detected(self) -> None:
        """Test that an altered blob is refused."""
        with tempfile.TemporaryDirectory() as temp_dir:
            save_checkpoint(temp_dir, sample_arrays())
            blob = blob_path(Path(temp_dir))
            data = bytearray(blob.read_bytes())
            data[5] ^= 0xFF
            blob.write_bytes(bytes(data))
            with pytest.raises(CheckpointError, match="corrupt"):
                load_checkpoint(temp_dir)

    def test_truncated_blob_detected(self) -> None:
        """Test that a truncated blob is refused."""
        with tempfile.TemporaryDirectory() as temp_dir:
            save_checkpoint(temp_dir, sample_arrays())
            blob = blob_path(Path(temp_dir))
            blob.write_bytes(blob.read_bytes()[:-4])
            with pytest.raises(CheckpointError, match="corrupt"):
                load_checkpoint(temp_dir)

    def test_missing_blob(self) -> None:
        """Test that a manifest without its blob is refused."""
        with tempfile.TemporaryDirectory() as temp_dir:
            save_checkpoint(temp_dir, sample_arrays())
            blob_path(Path(temp_dir)).unlink()
            with pytest.raises(CheckpointError, match="missing"):
                load_checkpoint(temp_dir)

    def test_missing_manifest(self) -> None:
        """Test that an empty directory is a missing artifact."""
        with tempfile.TemporaryDirectory() as temp_dir:
            with pytest.raises(MissingArtifactError):
                load_checkpoint(temp_dir)
            with pytest.raises(MissingArtifactError):
                checkpoint_hash(temp_dir)

    def test_foreign_manifest(self) -> None:
        """Test that a manifest of another format is refused."""
        with tempfile.TemporaryDirectory() as temp_dir:
            (Path(temp_dir) / MANIFEST_NAME).write_text('{"format": "other"}')
            with pytest.raises(CheckpointError, match="not a davae-checkpoint"):
                load_checkpoint(temp_dir)


class TestModuleState:
    """Tests for module and optimizer state helpers."""

    def test_module_round_trip(self) -> None:
        """Test saving a module under a prefix and loading it into a fresh one."""
        torch.manual_seed(0)
        source = nn.Linear(3, 2)
        target = nn.Linear(3, 2)
        with tempfile.TemporaryDirectory() as temp_dir:
            save_checkpoint(temp_dir, module_arrays("net", source))
            load_module(target, load_checkpoint(temp_dir), "net")
        assert state_hash(source) == state_hash(target)

    def test_module_mismatch(self) -> None:
        """Test that missing keys are reported as a checkpoint error."""
        with tempfile.TemporaryDirectory() as temp_dir:
            save_checkpoint(temp_dir, module_arrays("net", nn.Linear(3, 2)))
            with pytest.raises(CheckpointError, match="'net'"):
                load_module(nn.Linear(4, 2), load_checkpoint(temp_dir), "net")

    def test_state_hash(self) -> None:
        """Test that the state hash ignores order and tracks content."""
        arrays = sample_arrays()
        reordered = dict(reversed(list(arrays.items())))
        assert state_hash(arrays) == state_hash(reordered)
        changed = dict(arrays)
        changed["scalar"] = torch.tensor(2.0)
        assert state_hash(arrays) != state_hash(changed)

    def test_optimizer_round_trip(self) -> None:
        """Test that AdamW moments survive a checkpoint."""
        torch.manual_seed(0)
        model = nn.Linear(3, 2)
        optimizer = torch.optim.AdamW(model.parameters(), lr=1e-3, betas=(0.5, 0.9))
        model(torch.randn(4, 3)).sum().backward()
        optimizer.step()
        arrays, groups = optimizer_arrays("optim", optimizer)
        json.dumps(groups)
        with tempfile.TemporaryDirectory() as temp_dir:
            save_checkpoint(temp_dir, arrays)
            checkpoint = load_checkpoint(temp_dir)
        restored = torch.optim.AdamW(model.parameters(), lr=1.0)
        restore_optimizer(restored, checkpoint, "optim", groups)
        state = restored.state_dict()
        assert state["param_groups"][0]["lr"] == 1e-3
        assert state["param_groups"][0]["betas"] == (0.5, 0.9)
        original = optimizer.state_dict()["state"]
        for param_id, values in original.items():
            assert torch.equal(state["state"][param_id]["exp_avg"], values["exp_avg"])
