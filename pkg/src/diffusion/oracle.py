"""
Closed-form ground truth for Gaussian data.

For data x_0 ~ N(mu, sigma_d^2 I) (scalar or diagonal per-entry mu) noised as
x_t = x_0 + t z, the posterior mean, the probability-flow trajectory and the
consistency function all have closed forms. They serve as drop-in denoisers
for the samplers and the distillation loop, and as references in tests.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from src.diffusion.protocol import NoiseLevel
from src.diffusion.schedule import append_dims
from src.errors import ScheduleError
from src.numcore.tensor import Tensor

logger = logging.getLogger(__name__)

ArrayOrTensor = Union[Tensor, np.ndarray, float]


@dataclass(frozen=True)
class GaussianSpec:
    """Gaussian data distribution with mean ``mu`` and std ``sigma_d``."""

    mu: Union[float, np.ndarray] = 0.0
    sigma_d: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.sigma_d) or self.sigma_d <= 0:
            raise ValueError(f"sigma_d must be positive, got {self.sigma_d}")

    def sample(self, rng, shape) -> np.ndarray:
        """Draw data samples."""
        return self.mu + self.sigma_d * rng.normal(shape)


def _values(x: ArrayOrTensor) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def analytic_denoiser(x: ArrayOrTensor, t: NoiseLevel, g: GaussianSpec) -> np.ndarray:
    """D*(x, t) = (sigma_d^2 x + t^2 mu) / (sigma_d^2 + t^2)."""
    x = _values(x)
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ScheduleError(f"noise level must be >= 0, got min t={float(np.min(t))}")
    t = append_dims(t, x.ndim)
    s2 = g.sigma_d ** 2
    return (s2 * x + t * t * g.mu) / (s2 + t * t)


def analytic_trajectory(x_start: ArrayOrTensor, t_start: NoiseLevel, t: NoiseLevel, g: GaussianSpec) -> np.ndarray:
    """
    Probability-flow ODE solution through (x_start, t_start), evaluated at t:

        x(t) = mu + (x_start - mu) sqrt((sigma_d^2 + t^2) / (sigma_d^2 + t_start^2))
    """
    x_start = _values(x_start)
    t = np.asarray(t, dtype=np.float64)
    if np.any(t <= 0):
        raise ScheduleError(f"trajectory time must be > 0, got min t={float(np.min(t))}")
    s2 = g.sigma_d ** 2
    t_start = append_dims(t_start, x_start.ndim)
    t = append_dims(t, x_start.ndim)
    ratio = np.sqrt((s2 + t * t) / (s2 + t_start * t_start))
    return g.mu + (x_start - g.mu) * ratio


def analytic_consistency(x_t: ArrayOrTensor, t: NoiseLevel, g: GaussianSpec, epsilon: float) -> np.ndarray:
    """Map (x_t, t) to the point of its trajectory at ``epsilon``."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < epsilon):
        raise ScheduleError(f"noise level below epsilon={epsilon}: min t={float(np.min(t))}")
    x_t = _values(x_t)
    out = analytic_trajectory(x_t, t, epsilon, g)
    at_boundary = append_dims(t == epsilon, x_t.ndim)
    return np.where(at_boundary, x_t, out)


def analytic_solver_step(x_next: ArrayOrTensor, t_next: NoiseLevel, t_n: NoiseLevel, g: GaussianSpec) -> np.ndarray:
    """Exact ODE step from t_next down to t_n (replaces the Euler step in tests)."""
    return analytic_trajectory(x_next, t_next, t_n, g)


class GaussianDenoiser:
    """Analytic posterior-mean denoiser with an evaluation counter."""

    def __init__(self, spec: GaussianSpec):
        self.spec = spec
        self.nfe = 0

    def __call__(self, x: Tensor, t: NoiseLevel, cond: Optional[Tensor] = None) -> Tensor:
        self.nfe += 1
        return Tensor(analytic_denoiser(x, t, self.spec))

    def reset_nfe(self) -> None:
        self.nfe = 0


class GaussianConsistency:
    """Exact consistency function for Gaussian data, usable as a student."""

    def __init__(self, spec: GaussianSpec, epsilon: float):
        self.spec = spec
        self.epsilon = epsilon
        self.nfe = 0

    def __call__(self, x: Tensor, t: NoiseLevel, cond: Optional[Tensor] = None) -> Tensor:
        self.nfe += 1
        return Tensor(analytic_consistency(x, t, self.spec, self.epsilon))

    def reset_nfe(self) -> None:
        self.nfe = 0
