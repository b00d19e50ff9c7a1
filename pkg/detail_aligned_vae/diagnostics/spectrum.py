"""Radial power spectra of latent channels.

Each channel map gets an orthonormal 2D FFT; squared magnitudes are binned by
integer distance from DC (in cycles per latent grid) and averaged over
channels and items. Frequencies beyond Nyquist (the corners of the spectrum)
fall into the last bin, so the binned energy equals the spatial energy.
"""

from dataclasses import dataclass
from typing import Any

import numpy as np
import torch

from ..core.errors import ShapeError
from ..core.latent import LatentBatch

BRANCHES = ("base", "detail")


@dataclass(frozen=True)
class SpectrumProfile:
    """Per-bin spectrum of one latent branch.

    Attributes:
        branch: ``base`` or ``detail``
        radii: Integer radius of each bin, 0 (DC) to Nyquist
        power: Mean power per frequency in each bin
        energy: Summed power per bin, averaged over channel maps
        counts: Number of frequencies in each bin
        num_maps: Number of channel maps averaged
    """

    branch: str
    radii: np.ndarray
    power: np.ndarray
    energy: np.ndarray
    counts: np.ndarray
    num_maps: int

    @property
    def nyquist(self) -> int:
        return int(self.radii[-1])

    @property
    def total_energy(self) -> float:
        return float(self.energy.sum())

    def to_dict(self) -> dict[str, Any]:
        return {
            "branch": self.branch,
            "radii": self.radii.tolist(),
            "power": self.power.tolist(),
            "energy": self.energy.tolist(),
            "counts": self.counts.tolist(),
            "num_maps": self.num_maps,
        }


def radius_map(height: int, width: int) -> np.ndarray:
    """Integer radius of each FFT coefficient, clipped to Nyquist."""
    ky = np.fft.fftfreq(height) * height
    kx = np.fft.fftfreq(width) * width
    radius = np.sqrt(ky[:, None] ** 2 + kx[None, :] ** 2)
    nyquist = min(height, width) // 2
    return np.minimum(np.rint(radius).astype(np.int64), nyquist)


def _maps(latents: LatentBatch | torch.Tensor | np.ndarray, branch: str) -> np.ndarray:
    if branch not in BRANCHES:
        raise ValueError(f"branch must be one of {BRANCHES}, got '{branch}'")
    if isinstance(latents, LatentBatch):
        data = latents.stack(branch).detach().cpu().double().numpy()
    elif isinstance(latents, torch.Tensor):
        data = latents.detach().cpu().double().numpy()
    else:
        data = np.asarray(latents, dtype=np.float64)
    if data.ndim == 2:
        data = data[None]
    if data.ndim < 3 or data.size == 0:
        raise ShapeError(f"Expected (..., h, w) latent maps, got shape {data.shape}")
    return data.reshape(-1, data.shape[-2], data.shape[-1])


def radial_power_spectrum(
    latents: LatentBatch | torch.Tensor | np.ndarray, branch: str = "detail"
) -> SpectrumProfile:
    """Angularly binned power spectrum, averaged over channels and items.

    ``latents`` is a :class:`LatentBatch` or a raw ``(..., h, w)`` array whose
    leading axes are averaged over.
    """
    maps = _maps(latents, branch)
    num_maps, height, width = maps.shape
    power = np.abs(np.fft.fft2(maps, norm="ortho")) ** 2
    mean_power = power.mean(axis=0)

    radius = radius_map(height, width).ravel()
    nbins = min(height, width) // 2 + 1
    counts = np.bincount(radius, minlength=nbins)
    energy = np.bincount(radius, weights=mean_power.ravel(), minlength=nbins)
    per_bin = np.divide(
        energy, counts, out=np.zeros_like(energy), where=counts > 0
    )
    return SpectrumProfile(
        branch=branch,
        radii=np.arange(nbins),
        power=per_bin,
        energy=energy,
        counts=counts,
        num_maps=num_maps,
    )


def high_freq_energy_fraction(
    profile: SpectrumProfile, cutoff_fraction: float
) -> float:
    """Share of energy in bins with radius above ``cutoff_fraction * Nyquist``."""
    if not 0.0 < cutoff_fraction < 1.0:
        raise ValueError(f"cutoff_fraction must lie in (0, 1), got {cutoff_fraction}")
    total = profile.total_energy
    if total == 0.0:
        return 0.0
    above = profile.radii > cutoff_fraction * profile.nyquist
    return float(profile.energy[above].sum() / total)


def branch_spectra(latents: LatentBatch) -> dict[str, SpectrumProfile]:
    return {branch: radial_power_spectrum(latents, branch) for branch in BRANCHES}
