"""
Shared fixtures.
"""

import pytest

from src.diffusion.schedule import Precond
from src.models.denoiser import WaveNetConfig, init_denoiser_params
from src.numcore.rng import Rng
from src.numcore.tensor import set_precision


@pytest.fixture(autouse=True)
def f64_precision():
    """Every test starts (and leaves the process) at 64-bit precision."""
    set_precision("f64")
    yield
    set_precision("f64")


@pytest.fixture
def small_network():
    """A conditioned network small enough for per-test training."""
    return WaveNetConfig(n_layers=2, residual_channels=4, dilation_cycle=2, kernel_size=3,
                         cond_dim=6, mel_bins=4, time_embed_dim=8)


@pytest.fixture
def small_params(small_network):
    """Parameters for ``small_network`` with a nonzero output projection."""
    rng = Rng(11)
    params = init_denoiser_params(small_network, rng)
    params["output/kernel"].data = 0.3 * rng.normal(params["output/kernel"].shape)
    return params


@pytest.fixture
def precond():
    """Default preconditioning (sigma_data 0.5, epsilon 0.002, t_max 80)."""
    return Precond(sigma_data=0.5)
