"""Residual ELU denoiser with a total-variation regularized loss, in plain numpy."""

from .network import NetworkConfig, ResidualDenoiser, denoise, load_checkpoint, save_checkpoint
from .texture import asm, compute_glcm, psnr

__all__ = [
    "NetworkConfig",
    "ResidualDenoiser",
    "asm",
    "compute_glcm",
    "denoise",
    "load_checkpoint",
    "psnr",
    "save_checkpoint",
]
__version__ = "0.1.0"
