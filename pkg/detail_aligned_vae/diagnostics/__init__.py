"""Reconstruction metrics, decoder sensitivity, latent spectra and plots."""

from .embedding import latent_embedding_2d
from .metrics import ReconReport, evaluate_reconstruction, psnr, ssim
from .sensitivity import AblationMode, decoder_sensitivity, sensitivity_sweep
from .spectrum import (
    SpectrumProfile,
    branch_spectra,
    high_freq_energy_fraction,
    radial_power_spectrum,
)
from .sweep import sweep_align

__all__ = [
    "AblationMode",
    "ReconReport",
    "SpectrumProfile",
    "branch_spectra",
    "decoder_sensitivity",
    "evaluate_reconstruction",
    "high_freq_energy_fraction",
    "latent_embedding_2d",
    "psnr",
    "radial_power_spectrum",
    "sensitivity_sweep",
    "ssim",
    "sweep_align",
]
