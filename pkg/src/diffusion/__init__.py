"""Noise schedule, analytic Gaussian oracles and samplers."""

from src.diffusion.oracle import (
    GaussianConsistency,
    GaussianDenoiser,
    GaussianSpec,
    analytic_consistency,
    analytic_denoiser,
    analytic_solver_step,
    analytic_trajectory,
)
from src.diffusion.protocol import Denoiser
from src.diffusion.sampler import Trajectory, record_trajectory, sample_student, sample_teacher
from src.diffusion.schedule import (
    Precond,
    TimeGrid,
    karras_grid,
    loss_weight,
    precond_coeffs,
    sample_train_noise_level,
)

__all__ = [
    "Denoiser",
    "GaussianConsistency",
    "GaussianDenoiser",
    "GaussianSpec",
    "Precond",
    "TimeGrid",
    "Trajectory",
    "analytic_consistency",
    "analytic_denoiser",
    "analytic_solver_step",
    "analytic_trajectory",
    "karras_grid",
    "loss_weight",
    "precond_coeffs",
    "record_trajectory",
    "sample_student",
    "sample_teacher",
    "sample_train_noise_level",
]
