"""WaveNet denoiser and named parameter sets."""

from src.models.denoiser import (
    PRESETS,
    NetworkDenoiser,
    WaveNetConfig,
    check_params,
    denoise,
    f_forward,
    init_denoiser_params,
    preset,
    sinusoidal_embedding,
    time_embedding,
)
from src.models.params import ParamSet

__all__ = [
    "PRESETS",
    "NetworkDenoiser",
    "ParamSet",
    "WaveNetConfig",
    "check_params",
    "denoise",
    "f_forward",
    "init_denoiser_params",
    "preset",
    "sinusoidal_embedding",
    "time_embedding",
]
