"""
Generation from a trained denoiser.

Teacher sampling integrates the probability-flow ODE

    dx/dt = (x - D(x, t, cond)) / t

from t_max down to epsilon over the grid with Euler or Heun steps. Student
sampling maps pure noise to data in one evaluation and optionally refines it
by re-noising to lower levels of an evenly spaced sub-grid.
"""

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.diffusion.protocol import Denoiser
from src.diffusion.schedule import TimeGrid
from src.errors import NonFiniteError, ScheduleError
from src.numcore.rng import Rng
from src.numcore.tensor import Tensor

logger = logging.getLogger(__name__)

SOLVERS = ("euler", "heun")


@dataclass
class Trajectory:
    """Sequence of (t, x) snapshots emitted by a sampler."""

    snapshots: List[Tuple[float, np.ndarray]] = field(default_factory=list)

    def append(self, t: float, x: np.ndarray) -> None:
        self.snapshots.append((float(t), np.array(x, copy=True)))

    def __len__(self) -> int:
        return len(self.snapshots)

    def __iter__(self) -> Iterator[Tuple[float, np.ndarray]]:
        return iter(self.snapshots)

    @property
    def times(self) -> List[float]:
        return [t for t, _ in self.snapshots]


@contextmanager
def record_trajectory(enabled: bool = True) -> Iterator[Optional[Trajectory]]:
    """
    Yield a Trajectory to pass to a sampler, or None when disabled.

    Usage:
        with record_trajectory() as traj:
            sample_teacher(denoiser, cond, grid, rng, trajectory=traj)
        len(traj)  # N + 1
    """
    yield Trajectory() if enabled else None


def _resolve_shape(denoiser: Denoiser, cond: Optional[Tensor], shape: Optional[Sequence[int]]) -> Tuple[int, ...]:
    if shape is not None:
        return tuple(shape)
    output_shape = getattr(denoiser, "output_shape", None)
    if output_shape is None or cond is None:
        raise ValueError("shape is required when the denoiser cannot infer it from cond")
    return tuple(output_shape(cond))


def _check_state(x: np.ndarray, step: int) -> None:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"non-finite sampler state at step {step}")


def sample_teacher(
    denoiser: Denoiser,
    cond: Optional[Tensor],
    grid: TimeGrid,
    rng: Rng,
    solver: str = "euler",
    shape: Optional[Sequence[int]] = None,
    trajectory: Optional[Trajectory] = None,
) -> np.ndarray:
    """
    Solve the probability-flow ODE from t_N to epsilon.

    Euler uses N evaluations. Heun adds a second-stage correction on every
    step except the last one (to epsilon), so it uses 2N - 1.

    Args:
        denoiser: Teacher denoiser D(x, t, cond)
        cond: Conditioning matrix (frames x d_cond), or None
        grid: Noise-level grid
        rng: Source of the initial noise
        solver: "euler" or "heun"
        shape: Output shape; inferred from cond when the denoiser supports it
        trajectory: Optional recorder receiving N + 1 snapshots

    Returns:
        Sample at t = epsilon

    Raises:
        NonFiniteError: If the state becomes NaN/Inf (message names the step)
    """
    if solver not in SOLVERS:
        raise ValueError(f"unknown solver {solver!r}; expected one of {SOLVERS}")
    shape = _resolve_shape(denoiser, cond, shape)
    times = grid.times
    x = grid.t_max * rng.normal(shape)
    if trajectory is not None:
        trajectory.append(times[-1], x)

    n = grid.n_steps
    for step, i in enumerate(range(n, 0, -1)):
        t_cur, t_next = times[i], times[i - 1]
        denoised = denoiser(Tensor(x), t_cur, cond).data
        d_cur = (x - denoised) / t_cur
        x_next = x + (t_next - t_cur) * d_cur
        if solver == "heun" and i > 1:
            denoised_next = denoiser(Tensor(x_next), t_next, cond).data
            d_next = (x_next - denoised_next) / t_next
            x_next = x + (t_next - t_cur) * 0.5 * (d_cur + d_next)
        x = x_next
        _check_state(x, step)
        if trajectory is not None:
            trajectory.append(t_next, x)
    return x


def sample_student(
    denoiser: Denoiser,
    cond: Optional[Tensor],
    steps: int,
    grid: TimeGrid,
    rng: Rng,
    shape: Optional[Sequence[int]] = None,
    trajectory: Optional[Trajectory] = None,
) -> np.ndarray:
    """
    One-step or multi-step consistency sampling.

    x <- t_N z; x <- D(x, t_N). For each further level t_i of the sub-grid
    (see ``TimeGrid.subgrid_indices``): x <- D(x + sqrt(t_i^2 - eps^2) z, t_i).
    Exactly ``steps`` denoiser evaluations.

    Raises:
        ScheduleError: If steps is outside [1, N]
    """
    if steps < 1 or steps > grid.n_steps:
        raise ScheduleError(f"steps must be in [1, {grid.n_steps}], got {steps}")
    shape = _resolve_shape(denoiser, cond, shape)
    indices = grid.subgrid_indices(steps)

    t_top = grid.times[indices[0]]
    x = t_top * rng.normal(shape)
    if trajectory is not None:
        trajectory.append(t_top, x)
    x = denoiser(Tensor(x), t_top, cond).data
    _check_state(x, 0)

    for step, idx in enumerate(indices[1:], start=1):
        t_i = grid.times[idx]
        noisy = x + np.sqrt(t_i * t_i - grid.epsilon ** 2) * rng.normal(shape)
        if trajectory is not None:
            trajectory.append(t_i, noisy)
        x = denoiser(Tensor(noisy), t_i, cond).data
        _check_state(x, step)

    if trajectory is not None:
        trajectory.append(grid.epsilon, x)
    return x
