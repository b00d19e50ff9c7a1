"""Image datasets and seeded loaders.

Images are ``3 x S x S`` float tensors in ``[-1, 1]`` at the high resolution;
base-resolution images are derived with :func:`area_downsample`.
"""

import logging
import math
import re
import warnings
from collections.abc import Iterator
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch.utils.data import DataLoader, Dataset

from ..models.tokenizer import area_downsample
from .config import DatasetConfig

logger = logging.getLogger(__name__)

Sample = tuple[torch.Tensor, int]


class ProceduralDataset(Dataset[Sample]):
    """Deterministic multi-frequency textures with a class-dependent shape.

    Each class fixes a low-frequency orientation and frequency, a
    high-frequency band above the base-resolution Nyquist limit, and a shape
    (disc or square). Phases, colors and shape placement vary per item. Item
    ``i`` only depends on ``seed`` and ``i``.
    """

    def __init__(
        self, num_images: int, num_classes: int = 10, hr_size: int = 64, seed: int = 0
    ) -> None:
        if num_classes < 1 or num_images < 1:
            raise ValueError("num_images and num_classes must be positive")
        self.num_images = num_images
        self.num_classes = num_classes
        self.hr_size = hr_size
        self.seed = seed
        coords = (torch.arange(hr_size, dtype=torch.float32) + 0.5) / hr_size
        self._yy, self._xx = torch.meshgrid(coords, coords, indexing="ij")

    def __len__(self) -> int:
        return self.num_images

    def __getitem__(self, index: int) -> Sample:
        if not 0 <= index < self.num_images:
            raise IndexError(f"Index {index} out of range for {self.num_images} images")
        label = index % self.num_classes
        generator = torch.Generator().manual_seed(self.seed * 1_000_003 + index)
        rand = torch.rand(12, generator=generator)

        theta = math.pi * label / self.num_classes
        low_freq = 1.0 + (label % 5)
        high_freq = self.hr_size / 4 + 2 * (label % 4)
        along = self._xx * math.cos(theta) + self._yy * math.sin(theta)
        across = self._xx * math.sin(theta) - self._yy * math.cos(theta)
        phase = 2 * math.pi * rand[0]
        texture = 0.5 * torch.sin(2 * math.pi * low_freq * along + phase)
        texture = texture + 0.3 * torch.sin(
            2 * math.pi * high_freq * across + 2 * math.pi * rand[1]
        )

        color = 0.4 + 0.6 * rand[2:5]
        image = color[:, None, None] * texture[None]

        cy, cx = 0.3 + 0.4 * rand[5], 0.3 + 0.4 * rand[6]
        radius = 0.12 + 0.12 * rand[7]
        if label % 2 == 0:
            mask = (self._yy - cy) ** 2 + (self._xx - cx) ** 2 <= radius**2
        else:
            mask = torch.maximum((self._yy - cy).abs(), (self._xx - cx).abs()) <= radius
        shape_color = 2 * rand[8:11] - 1
        image = torch.where(mask[None], shape_color[:, None, None], image)
        return image.clamp(-1.0, 1.0), label


IMAGE_PATTERN = r"\.(png|jpe?g|bmp|webp)$"


class ImageFolderDataset(Dataset[Sample]):
    """Images under ``root``; each sub-directory is one class.

    Images directly in ``root`` get label 0 when there are no class
    sub-directories. Files are center-cropped to a square and resized to
    ``hr_size``. Unreadable files are skipped with a warning.
    """

    def __init__(
        self, root: str | Path, hr_size: int = 64, filepattern: str = IMAGE_PATTERN
    ) -> None:
        self.root = Path(root)
        self.hr_size = hr_size
        self._filepattern = filepattern
        if not self.root.is_dir():
            raise FileNotFoundError(f"Image folder {self.root} does not exist")

        class_dirs = sorted(p for p in self.root.iterdir() if p.is_dir())
        self.classes = [p.name for p in class_dirs]
        sources = [(d, i) for i, d in enumerate(class_dirs)] or [(self.root, 0)]

        self.items: list[tuple[Path, int]] = []
        for directory, label in sources:
            for path in sorted(directory.iterdir()):
                if path.is_file() and self.identify(path):
                    if self._readable(path):
                        self.items.append((path, label))
        if not self.items:
            raise ValueError(f"No readable images found under {self.root}")
        logger.info(
            "Found %d images in %d classes", len(self.items), max(1, len(self.classes))
        )

    @property
    def num_classes(self) -> int:
        return max(1, len(self.classes))

    def identify(self, filepath: str | Path) -> bool:
        return re.search(self._filepattern, str(filepath), re.IGNORECASE) is not None

    @staticmethod
    def _readable(path: Path) -> bool:
        try:
            with Image.open(path) as image:
                image.verify()
        except (OSError, SyntaxError) as e:
            warnings.warn(f"Skipping unreadable image {path}: {e}", stacklevel=2)
            return False
        return True

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, index: int) -> Sample:
        path, label = self.items[index]
        with Image.open(path) as image:
            rgb = image.convert("RGB")
        side = min(rgb.size)
        left = (rgb.width - side) // 2
        top = (rgb.height - side) // 2
        rgb = rgb.crop((left, top, left + side, top + side)).resize(
            (self.hr_size, self.hr_size), Image.Resampling.BICUBIC
        )
        array = np.asarray(rgb, dtype=np.float32) / 127.5 - 1.0
        return torch.from_numpy(array).permute(2, 0, 1).contiguous(), label


def make_dataset(config: DatasetConfig) -> Dataset[Sample]:
    if config.kind == "folder":
        return ImageFolderDataset(str(config.path), config.hr_size)
    return ProceduralDataset(
        config.num_images, config.num_classes, config.hr_size, config.seed
    )


def make_loader(
    dataset: Dataset[Sample], batch_size: int, seed: int, shuffle: bool = True
) -> DataLoader[Sample]:
    """Single-process loader whose batch order is fixed by ``seed``."""
    generator = torch.Generator()
    generator.manual_seed(seed)
    return DataLoader(
        dataset,
        batch_size=batch_size,
        shuffle=shuffle,
        drop_last=shuffle and len(dataset) >= batch_size,  # type: ignore[arg-type]
        generator=generator,
        num_workers=0,
    )


def forever(loader: DataLoader[Sample]) -> Iterator[tuple[torch.Tensor, torch.Tensor]]:
    """Cycle through ``loader`` epoch after epoch."""
    while True:
        yield from loader


def split_resolutions(
    images_hr: torch.Tensor, scale: int
) -> tuple[torch.Tensor, torch.Tensor]:
    """(base, high-res) image pair; the base image is the area-downsampled one."""
    return area_downsample(images_hr, scale), images_hr
