"""Teacher training, consistency distillation, AdamW and batching."""

from src.training.batching import Batch, BatchSampler, GaussianBatchSampler, MelNormalizer
from src.training.distill import (
    DistillState,
    consistency_loss,
    distill_step,
    ema_update,
    euler_solver_step,
    run_distillation,
)
from src.training.optimizer import AdamW
from src.training.teacher import TrainState, add_noise, teacher_loss, train_step, train_teacher

__all__ = [
    "AdamW",
    "Batch",
    "BatchSampler",
    "DistillState",
    "GaussianBatchSampler",
    "MelNormalizer",
    "TrainState",
    "add_noise",
    "consistency_loss",
    "distill_step",
    "ema_update",
    "euler_solver_step",
    "run_distillation",
    "teacher_loss",
    "train_step",
    "train_teacher",
]
