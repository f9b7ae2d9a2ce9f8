"""
Teacher denoiser training.

Minimizes the weighted denoising loss

    L = E_t E_z [ lambda(t) * || D(x0 + t z, t, cond) - x0 ||^2 ]

with log-normal noise levels and AdamW. The conditioning encoder's
projections and singer table are trained jointly with the network.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Union

import numpy as np
from tqdm import tqdm

from src.diffusion.protocol import Denoiser, NoiseLevel
from src.diffusion.schedule import (
    DEFAULT_P_MEAN,
    DEFAULT_P_STD,
    Precond,
    append_dims,
    loss_weight,
    sample_train_noise_level,
)
from src.errors import NonFiniteError, ScheduleError, TrainingDivergedError
from src.features.conditioning import CondEncoder
from src.models.denoiser import NetworkDenoiser, WaveNetConfig
from src.models.params import ParamSet
from src.numcore.rng import Rng
from src.numcore.tensor import Tape, Tensor, mean, mul, sub
from src.records import format_record
from src.training.batching import Batch
from src.training.optimizer import AdamW

logger = logging.getLogger(__name__)


def add_noise(x0: Union[Tensor, np.ndarray], t: NoiseLevel, rng: Rng) -> Tensor:
    """x_t = x0 + t z with z ~ N(0, I); ``t`` may hold one level per item."""
    x0 = x0.data if isinstance(x0, Tensor) else np.asarray(x0)
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ScheduleError(f"noise level must be >= 0, got min t={float(np.min(t))}")
    z = rng.normal(x0.shape)
    return Tensor(x0 + append_dims(t, x0.ndim) * z)


def encode_batch(encoder: Optional[CondEncoder], batch: Batch) -> Optional[Tensor]:
    """Conditioning for a batch, or None for unconditional data."""
    if encoder is None or not batch.has_cond:
        return None
    return encoder.encode_batch(batch.content, batch.prosody, batch.singer_ids)


def teacher_loss(
    denoiser: Denoiser,
    batch: Batch,
    t: NoiseLevel,
    rng: Rng,
    precond: Precond,
    encoder: Optional[CondEncoder] = None,
) -> Tensor:
    """
    Mean over batch and elements of lambda(t) (D - x0)^2.

    Raises:
        TrainingDivergedError: If the loss is not finite (names the noise levels)
    """
    if batch.size == 0:
        raise ValueError("batch must be nonempty")
    x0 = Tensor(batch.x0)
    x_t = add_noise(x0, t, rng)
    weight = append_dims(loss_weight(t, precond), x0.ndim)
    try:
        cond = encode_batch(encoder, batch)
        residual = sub(denoiser(x_t, t, cond), x0)
        loss = mean(mul(mul(residual, residual), weight))
    except NonFiniteError as e:
        raise TrainingDivergedError(f"non-finite teacher loss at t={np.round(np.asarray(t), 6).tolist()}: {e}") from e
    return loss


@dataclass
class TrainState:
    """Mutable teacher training state owned by one thread."""

    params: ParamSet
    network: WaveNetConfig
    precond: Precond
    optimizer: AdamW
    rng: Rng
    encoder: Optional[CondEncoder] = None
    step: int = 0
    p_mean: float = DEFAULT_P_MEAN
    p_std: float = DEFAULT_P_STD
    last_loss: Optional[float] = None
    history: List[Dict[str, Any]] = field(default_factory=list)

    @classmethod
    def create(
        cls,
        params: ParamSet,
        network: WaveNetConfig,
        precond: Precond,
        rng: Rng,
        encoder: Optional[CondEncoder] = None,
        lr: float = 1e-4,
        betas=(0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 1e-2,
        p_mean: float = DEFAULT_P_MEAN,
        p_std: float = DEFAULT_P_STD,
    ) -> "TrainState":
        params.requires_grad_(True)
        trainable = params if encoder is None else params.merged(encoder.params.requires_grad_(True))
        optimizer = AdamW(trainable, lr=lr, betas=betas, eps=eps, weight_decay=weight_decay)
        return cls(
            params=params,
            network=network,
            precond=precond,
            optimizer=optimizer,
            rng=rng,
            encoder=encoder,
            p_mean=p_mean,
            p_std=p_std,
        )

    @property
    def denoiser(self) -> NetworkDenoiser:
        return NetworkDenoiser(self.params, self.network, self.precond)

    @property
    def trainable(self) -> ParamSet:
        return self.optimizer.params


def train_step(state: TrainState, batch: Batch) -> TrainState:
    """
    One AdamW update on the teacher loss.

    Raises:
        TrainingDivergedError: On a non-finite loss or gradient; parameters
            are left untouched
    """
    p = state.precond
    t = sample_train_noise_level(state.rng, batch.size, state.p_mean, state.p_std, p.epsilon, p.t_max)
    state.optimizer.zero_grad()
    with Tape() as tape:
        loss = teacher_loss(state.denoiser, batch, t, state.rng, p, state.encoder)
        tape.backward(loss)
    state.optimizer.step()
    state.step += 1
    state.last_loss = loss.item()
    return state


def train_teacher(
    state: TrainState,
    sample_batch: Callable[[Rng], Batch],
    steps: int,
    log_every: int = 50,
    on_checkpoint: Optional[Callable[[TrainState], None]] = None,
    checkpoint_every: int = 0,
    progress: bool = False,
) -> TrainState:
    """
    Run ``steps`` training steps, drawing batches from the state's rng.

    Every ``log_every`` steps a ``train_step`` record is logged and appended
    to ``state.history``; ``on_checkpoint`` is called every
    ``checkpoint_every`` steps.
    """
    target = state.step + steps
    bar = tqdm(total=steps, desc="teacher", disable=not progress)
    try:
        while state.step < target:
            started = time.perf_counter()
            train_step(state, sample_batch(state.rng))
            elapsed = time.perf_counter() - started
            bar.update(1)
            if log_every and (state.step % log_every == 0 or state.step == target):
                record = {"step": state.step, "loss": state.last_loss, "wall_s": elapsed}
                state.history.append(record)
                logger.info(format_record("train_step", **record))
                bar.set_postfix(loss=f"{state.last_loss:.4g}")
            if on_checkpoint is not None and checkpoint_every and state.step % checkpoint_every == 0:
                on_checkpoint(state)
    finally:
        bar.close()
    return state
