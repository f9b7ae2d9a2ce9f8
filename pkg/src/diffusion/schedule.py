"""
Noise-level schedule, boundary-conditioned preconditioning and loss weights.

All coefficient functions accept a scalar noise level or an array of
per-item levels and return values of the same shape.
"""

import logging
from dataclasses import dataclass, field
from typing import Tuple, Union

import numpy as np

from src.errors import ScheduleError
from src.numcore.rng import Rng

logger = logging.getLogger(__name__)

Level = Union[float, np.ndarray]

DEFAULT_EPSILON = 0.002
DEFAULT_T_MAX = 80.0
DEFAULT_RHO = 7.0
DEFAULT_N_STEPS = 50
DEFAULT_P_MEAN = -1.2
DEFAULT_P_STD = 1.2


@dataclass(frozen=True)
class TimeGrid:
    """Discretized noise levels t_0 = epsilon < ... < t_N = t_max."""

    epsilon: float
    t_max: float
    n_steps: int
    rho: float
    times: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        if times.shape != (self.n_steps + 1,):
            raise ScheduleError(f"grid needs {self.n_steps + 1} times, got shape {list(times.shape)}")
        if self.epsilon <= 0:
            raise ScheduleError(f"epsilon must be positive, got {self.epsilon}")
        if times[0] != self.epsilon or times[-1] != self.t_max:
            raise ScheduleError("grid endpoints must equal epsilon and t_max")
        if not np.all(np.diff(times) > 0):
            raise ScheduleError("grid times must be strictly increasing")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    def __len__(self) -> int:
        return self.n_steps + 1

    def __getitem__(self, index: int) -> float:
        return float(self.times[index])

    def subgrid_indices(self, steps: int) -> np.ndarray:
        """
        Descending grid indices used by multi-step sampling.

        ``steps`` evenly spaced indices starting at N (t_max), e.g. N=50,
        steps=4 -> [50, 38, 25, 12].
        """
        if steps < 1 or steps > self.n_steps:
            raise ScheduleError(f"steps must be in [1, {self.n_steps}], got {steps}")
        indices = np.rint(np.linspace(self.n_steps, 0, steps, endpoint=False)).astype(np.int64)
        return indices

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "t_max": self.t_max,
            "n_steps": self.n_steps,
            "rho": self.rho,
        }


def karras_grid(
    n_steps: int = DEFAULT_N_STEPS,
    epsilon: float = DEFAULT_EPSILON,
    t_max: float = DEFAULT_T_MAX,
    rho: float = DEFAULT_RHO,
) -> TimeGrid:
    """
    Build the rho-warped grid

        times[i] = (eps^(1/rho) + i/N * (t_max^(1/rho) - eps^(1/rho)))^rho

    in increasing order. Endpoints are set exactly.

    Raises:
        ScheduleError: If n_steps < 1, not 0 < epsilon < t_max, or rho < 1
    """
    if n_steps < 1:
        raise ScheduleError(f"n_steps must be >= 1, got {n_steps}")
    if not 0 < epsilon < t_max:
        raise ScheduleError(f"need 0 < epsilon < t_max, got epsilon={epsilon}, t_max={t_max}")
    if rho < 1:
        raise ScheduleError(f"rho must be >= 1, got {rho}")

    ramp = np.arange(n_steps + 1, dtype=np.float64) / n_steps
    lo = epsilon ** (1.0 / rho)
    hi = t_max ** (1.0 / rho)
    times = (lo + ramp * (hi - lo)) ** rho
    times[0] = epsilon
    times[-1] = t_max
    return TimeGrid(epsilon=float(epsilon), t_max=float(t_max), n_steps=int(n_steps), rho=float(rho), times=times)


@dataclass(frozen=True)
class Precond:
    """Preconditioning constants: data std and the boundary noise level."""

    sigma_data: float = 0.5
    epsilon: float = DEFAULT_EPSILON
    t_max: float = DEFAULT_T_MAX

    def __post_init__(self):
        if not np.isfinite(self.sigma_data) or self.sigma_data <= 0:
            raise ScheduleError(f"sigma_data must be finite and positive, got {self.sigma_data}")
        if self.epsilon <= 0:
            raise ScheduleError(f"epsilon must be positive, got {self.epsilon}")


def append_dims(values: Level, ndim: int) -> np.ndarray:
    """Append trailing singleton axes so per-item values broadcast over items."""
    values = np.asarray(values, dtype=np.float64)
    return values.reshape(values.shape + (1,) * (ndim - values.ndim))


def precond_coeffs(t: Level, p: Precond) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Return (c_skip, c_out, c_in, c_noise) at noise level ``t``.

        c_skip = s^2 / ((t - eps)^2 + s^2)
        c_out  = s (t - eps) / sqrt(s^2 + t^2)
        c_in   = 1 / sqrt(s^2 + t^2)
        c_noise = ln(t) / 4

    c_skip(eps) = 1 and c_out(eps) = 0 exactly.

    Raises:
        ScheduleError: If any t < epsilon
    """
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < p.epsilon):
        raise ScheduleError(f"noise level below epsilon={p.epsilon}: min t={float(np.min(t))}")
    s2 = p.sigma_data ** 2
    shifted = t - p.epsilon
    root = np.sqrt(s2 + t * t)
    c_skip = s2 / (shifted * shifted + s2)
    c_out = p.sigma_data * shifted / root
    c_in = 1.0 / root
    c_noise = np.log(t) / 4.0
    return c_skip, c_out, c_in, c_noise


def loss_weight(t: Level, p: Precond) -> np.ndarray:
    """lambda(t) = (t^2 + s^2) / (t s)^2."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t <= 0):
        raise ScheduleError(f"loss weight needs t > 0, got min t={float(np.min(t))}")
    s2 = p.sigma_data ** 2
    return (t * t + s2) / (t * t * s2)


def sample_train_noise_level(
    rng: Rng,
    size: Union[int, Tuple[int, ...]] = (),
    p_mean: float = DEFAULT_P_MEAN,
    p_std: float = DEFAULT_P_STD,
    epsilon: float = DEFAULT_EPSILON,
    t_max: float = DEFAULT_T_MAX,
) -> Level:
    """
    Draw teacher training noise levels: ln t ~ N(p_mean, p_std^2),
    clamped to [epsilon, t_max].
    """
    log_t = p_mean + p_std * rng.generator.standard_normal(size=size if size != () else None)
    t = np.clip(np.exp(log_t), epsilon, t_max)
    return float(t) if np.ndim(t) == 0 else np.asarray(t, dtype=np.float64)
