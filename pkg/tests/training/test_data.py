"""Tests for datasets and loaders."""

import tempfile
from pathlib import Path

import numpy as np
import pytest
import torch
from PIL import Image

from detail_aligned_vae.training.config import DatasetConfig
from detail_aligned_vae.training.data import (
    ImageFolderDataset,
    ProceduralDataset,
    forever,
    make_dataset,
    make_loader,
    split_resolutions,
)


def write_image(path: Path, size: tuple[int, int], value: int) -> None:
    """Write a flat RGB image."""
    array = np.full((size[1], size[0], 3), value, dtype=np.uint8)
    Image.fromarray(array).save(path)


class TestProceduralDataset:
    """Tests for the procedural texture dataset."""

    def test_items_are_deterministic(self) -> None:
        """Test that an item depends only on the seed and its index."""
        first = ProceduralDataset(8, num_classes=4, hr_size=16, seed=1)
        second = ProceduralDataset(8, num_classes=4, hr_size=16, seed=1)
        other = ProceduralDataset(8, num_classes=4, hr_size=16, seed=2)
        image, label = first[5]
        assert torch.equal(image, second[5][0])
        assert not torch.equal(image, other[5][0])
        assert label == 1

    def test_range_and_shape(self) -> None:
        """Test image shape and value range."""
        dataset = ProceduralDataset(4, num_classes=2, hr_size=32)
        image, _ = dataset[0]
        assert image.shape == (3, 32, 32)
        assert float(image.min()) >= -1.0
        assert float(image.max()) <= 1.0

    def test_detail_above_base_nyquist(self) -> None:
        """Test that area downsampling removes energy from the images."""
        dataset = ProceduralDataset(4, num_classes=2, hr_size=32)
        image, _ = dataset[0]
        base, image_hr = split_resolutions(image[None], 2)
        restored = torch.nn.functional.interpolate(base, scale_factor=2, mode="nearest")
        assert float((restored - image_hr).abs().mean()) > 1e-3

    def test_out_of_range(self) -> None:
        """Test that indexing past the end raises IndexError."""
        with pytest.raises(IndexError):
            ProceduralDataset(2)[2]


class TestImageFolderDataset:
    """Tests for the image-folder dataset."""

    def test_class_subdirectories(self) -> None:
        """Test labels from sorted sub-directories and the resize."""
        with tempfile.TemporaryDirectory() as temp_dir:
            root = Path(temp_dir)
            for name, value in (("cats", 0), ("dogs", 255)):
                (root / name).mkdir()
                write_image(root / name / "a.png", (20, 12), value)
            dataset = ImageFolderDataset(root, hr_size=8)
            assert dataset.num_classes == 2
            assert dataset.classes == ["cats", "dogs"]
            image, label = dataset[1]
        assert label == 1
        assert image.shape == (3, 8, 8)
        assert torch.allclose(image, torch.ones_like(image))

    def test_flat_folder(self) -> None:
        """Test that images directly in the root get label 0."""
        with tempfile.TemporaryDirectory() as temp_dir:
            root = Path(temp_dir)
            write_image(root / "x.bmp", (8, 8), 0)
            dataset = ImageFolderDataset(root, hr_size=4)
            image, label = dataset[0]
        assert len(dataset) == 1
        assert label == 0
        assert torch.allclose(image, -torch.ones_like(image))

    def test_unreadable_file_skipped(self) -> None:
        """Test that an unreadable image is skipped with a warning."""
        with tempfile.TemporaryDirectory() as temp_dir:
            root = Path(temp_dir)
            write_image(root / "good.png", (8, 8), 10)
            (root / "bad.png").write_bytes(b"not an image")
            (root / "notes.txt").write_text("ignored")
            with pytest.warns(UserWarning, match="bad.png"):
                dataset = ImageFolderDataset(root, hr_size=4)
        assert len(dataset) == 1

    def test_identify(self) -> None:
        """Test the file pattern."""
        with tempfile.TemporaryDirectory() as temp_dir:
            write_image(Path(temp_dir) / "a.PNG", (4, 4), 0)
            dataset = ImageFolderDataset(temp_dir, hr_size=4)
            assert dataset.identify("photo.JPEG")
            assert not dataset.identify("photo.gif")

    def test_empty_and_missing(self) -> None:
        """Test that an empty or missing folder is refused."""
        with tempfile.TemporaryDirectory() as temp_dir:
            with pytest.raises(ValueError, match="No readable images"):
                ImageFolderDataset(temp_dir)
            with pytest.raises(FileNotFoundError):
                ImageFolderDataset(Path(temp_dir) / "missing")


class TestLoaders:
    """Tests for dataset construction and seeded loading."""

    def test_make_dataset(self) -> None:
        """Test that the config selects the dataset kind."""
        dataset = make_dataset(DatasetConfig(num_images=6, num_classes=3, hr_size=16))
        assert isinstance(dataset, ProceduralDataset)
        assert len(dataset) == 6

    def test_seeded_order(self) -> None:
        """Test that the seed fixes the batch order."""
        dataset = ProceduralDataset(12, num_classes=12, hr_size=8)

        def labels(seed: int) -> list[list[int]]:
            return [batch[1].tolist() for batch in make_loader(dataset, 4, seed)]

        assert labels(3) == labels(3)
        assert labels(3) != labels(4)

    def test_drop_last_when_shuffling(self) -> None:
        """Test that incomplete batches are dropped while shuffling."""
        dataset = ProceduralDataset(10, hr_size=8)
        shuffled = list(make_loader(dataset, 4, 0))
        ordered = list(make_loader(dataset, 4, 0, shuffle=False))
        assert [len(b[1]) for b in shuffled] == [4, 4]
        assert [len(b[1]) for b in ordered] == [4, 4, 2]

    def test_forever_cycles(self) -> None:
        """Test that forever restarts the loader."""
        dataset = ProceduralDataset(4, hr_size=8)
        stream = forever(make_loader(dataset, 2, 0, shuffle=False))
        labels = [next(stream)[1].tolist() for _ in range(3)]
        assert labels[0] == labels[2]

    def test_split_resolutions(self) -> None:
        """Test the base/high-res pair."""
        images = torch.zeros(2, 3, 16, 16)
        base, image_hr = split_resolutions(images, 2)
        assert base.shape == (2, 3, 8, 8)
        assert image_hr is images
