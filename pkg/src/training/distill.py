"""
Consistency distillation from a frozen teacher.

Each step draws a grid index n in [1, N-1], noises x0 to t_{n+1}, takes one
solver step with the teacher down to t_n, and pulls the student output at
t_{n+1} toward the EMA target's output at t_n:

    L = || D_theta(x_{t_{n+1}}, t_{n+1}) - stopgrad(D_theta-(x_hat_{t_n}, t_n)) ||^2

followed by an AdamW update of theta and an EMA update of theta-.
"""

import logging
import time
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Callable, Dict, List, Optional, Union

import numpy as np
from tqdm import tqdm

from src.diffusion.protocol import Denoiser, NoiseLevel
from src.diffusion.schedule import DEFAULT_EPSILON, Precond, TimeGrid, append_dims
from src.errors import NonFiniteError, ScheduleError, TrainingDivergedError
from src.features.conditioning import CondEncoder
from src.models.denoiser import NetworkDenoiser, WaveNetConfig
from src.models.params import ParamSet
from src.numcore.rng import Rng
from src.numcore.tensor import Tape, Tensor, sq_norm, sub
from src.records import format_record
from src.training.batching import Batch
from src.training.optimizer import AdamW
from src.training.teacher import encode_batch

logger = logging.getLogger(__name__)

SolverStep = Callable[[Denoiser, Tensor, NoiseLevel, NoiseLevel, Optional[Tensor]], Tensor]

DEFAULT_MU = 0.95


def euler_solver_step(
    denoiser: Denoiser,
    x_next: Union[Tensor, np.ndarray],
    t_next: NoiseLevel,
    t_n: NoiseLevel,
    cond: Optional[Tensor] = None,
    epsilon: float = DEFAULT_EPSILON,
) -> Tensor:
    """
    One Euler step of the probability-flow ODE from t_next down to t_n:

        x_hat = (t_n / t_next) x_next + ((t_next - t_n) / t_next) D(x_next, t_next)

    Raises:
        ScheduleError: Unless epsilon <= t_n < t_next (elementwise)
    """
    x_next = x_next if isinstance(x_next, Tensor) else Tensor(x_next)
    t_next_arr = np.asarray(t_next, dtype=np.float64)
    t_n_arr = np.asarray(t_n, dtype=np.float64)
    if np.any(t_n_arr < epsilon) or np.any(t_n_arr <= 0) or np.any(t_n_arr >= t_next_arr):
        raise ScheduleError(f"need epsilon <= t_n < t_next, got t_n={t_n_arr.tolist()}, t_next={t_next_arr.tolist()}")
    denoised = denoiser(x_next, t_next, cond).data
    ratio = append_dims(t_n_arr / t_next_arr, x_next.ndim)
    return Tensor(ratio * x_next.data + (1.0 - ratio) * denoised)


def ema_update(theta_minus: ParamSet, theta: ParamSet, mu: float = DEFAULT_MU) -> ParamSet:
    """
    theta- <- mu theta- + (1 - mu) theta, in place and outside any tape.

    Raises:
        ShapeError: If the two sets differ in paths or shapes
        ValueError: If mu is not in [0, 1)
    """
    if not 0.0 <= mu < 1.0:
        raise ValueError(f"mu must be in [0, 1), got {mu}")
    theta_minus.require_same_shape(theta, "EMA target and student")
    theta_minus.blend_(theta, mu)
    return theta_minus


@dataclass
class DistillState:
    """
    Student theta (trained), EMA target theta- and a frozen teacher.

    The teacher is any Denoiser: a trained network or an analytic oracle.
    The conditioning encoder is reused frozen from teacher training.
    """

    theta: ParamSet
    theta_minus: ParamSet
    teacher: Denoiser
    network: WaveNetConfig
    precond: Precond
    grid: TimeGrid
    optimizer: AdamW
    rng: Rng
    encoder: Optional[CondEncoder] = None
    mu: float = DEFAULT_MU
    step: int = 0
    last_loss: Optional[float] = None
    solver: Optional[SolverStep] = None
    history: List[Dict[str, Any]] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.mu < 1.0:
            raise ValueError(f"mu must be in [0, 1), got {self.mu}")
        if self.grid.n_steps < 2:
            raise ScheduleError(f"distillation needs at least 2 grid intervals, got {self.grid.n_steps}")
        self.theta.require_same_shape(self.theta_minus, "student and EMA target")

    @classmethod
    def create(
        cls,
        init_params: ParamSet,
        teacher: Denoiser,
        network: WaveNetConfig,
        precond: Precond,
        grid: TimeGrid,
        rng: Rng,
        encoder: Optional[CondEncoder] = None,
        mu: float = DEFAULT_MU,
        lr: float = 5e-5,
        betas=(0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 1e-2,
        solver: Optional[SolverStep] = None,
    ) -> "DistillState":
        """
        Start distillation with theta and theta- both copied from
        ``init_params`` (normally the teacher's own parameters).
        """
        theta = init_params.copy(requires_grad=True)
        theta_minus = init_params.copy(requires_grad=False)
        if encoder is not None:
            encoder.params.requires_grad_(False)
        if isinstance(teacher, NetworkDenoiser):
            teacher.params.requires_grad_(False)
        optimizer = AdamW(theta, lr=lr, betas=betas, eps=eps, weight_decay=weight_decay)
        return cls(
            theta=theta,
            theta_minus=theta_minus,
            teacher=teacher,
            network=network,
            precond=precond,
            grid=grid,
            optimizer=optimizer,
            rng=rng,
            encoder=encoder,
            mu=mu,
            solver=solver,
        )

    @property
    def student(self) -> NetworkDenoiser:
        return NetworkDenoiser(self.theta, self.network, self.precond)

    @property
    def target(self) -> NetworkDenoiser:
        return NetworkDenoiser(self.theta_minus, self.network, self.precond)


def consistency_loss(
    ds: DistillState,
    batch: Batch,
    rng: Rng,
    student: Optional[Denoiser] = None,
    target: Optional[Denoiser] = None,
) -> Tensor:
    """
    Squared distance between student and EMA-target outputs on adjacent grid
    points of one teacher trajectory step, averaged over the batch.

    ``student`` / ``target`` default to the networks of ``ds`` and can be
    replaced (e.g. by an exact consistency function) for diagnostics.
    """
    student = ds.student if student is None else student
    target = ds.target if target is None else target
    solver = ds.solver or partial(euler_solver_step, epsilon=ds.precond.epsilon)
    grid = ds.grid

    n = rng.integers(1, grid.n_steps, batch.size)
    if np.any(n < 1) or np.any(n > grid.n_steps - 1):
        raise RuntimeError(f"grid index out of range: {n.tolist()}")
    t_next = grid.times[n + 1]
    t_n = grid.times[n]

    x0 = batch.x0
    x_next = Tensor(x0 + append_dims(t_next, x0.ndim) * rng.normal(x0.shape))
    cond = encode_batch(ds.encoder, batch)
    x_hat = solver(ds.teacher, x_next, t_next, t_n, cond)
    anchor = target(x_hat, t_n, cond).detach()
    try:
        pred = student(x_next, t_next, cond)
        loss = sq_norm(sub(pred, anchor)) / batch.size
    except NonFiniteError as e:
        raise TrainingDivergedError(f"non-finite consistency loss at n={n.tolist()}: {e}", step=ds.step) from e
    return loss


def distill_step(ds: DistillState, batch: Batch) -> DistillState:
    """AdamW update of theta on the consistency loss, then EMA of theta-."""
    ds.optimizer.zero_grad()
    with Tape() as tape:
        loss = consistency_loss(ds, batch, ds.rng)
        tape.backward(loss)
    ds.optimizer.step()
    ema_update(ds.theta_minus, ds.theta, ds.mu)
    ds.step += 1
    ds.last_loss = loss.item()
    return ds


def run_distillation(
    ds: DistillState,
    sample_batch: Callable[[Rng], Batch],
    steps: int,
    log_every: int = 50,
    on_checkpoint: Optional[Callable[[DistillState], None]] = None,
    checkpoint_every: int = 0,
    progress: bool = False,
) -> DistillState:
    """Run ``steps`` distillation steps, logging ``distill_step`` records."""
    target = ds.step + steps
    bar = tqdm(total=steps, desc="distill", disable=not progress)
    try:
        while ds.step < target:
            started = time.perf_counter()
            distill_step(ds, sample_batch(ds.rng))
            elapsed = time.perf_counter() - started
            bar.update(1)
            if log_every and (ds.step % log_every == 0 or ds.step == target):
                record = {"step": ds.step, "loss": ds.last_loss, "mu": ds.mu, "wall_s": elapsed}
                ds.history.append(record)
                logger.info(format_record("distill_step", **record))
                bar.set_postfix(loss=f"{ds.last_loss:.4g}")
            if on_checkpoint is not None and checkpoint_every and ds.step % checkpoint_every == 0:
                on_checkpoint(ds)
    finally:
        bar.close()
    return ds
