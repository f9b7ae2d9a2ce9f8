"""
AdamW with decoupled weight decay.

Update per parameter, at step k:

    p <- p * (1 - lr * wd)
    m <- b1 m + (1 - b1) g
    v <- b2 v + (1 - b2) g^2
    p <- p - lr * (m / (1 - b1^k)) / (sqrt(v / (1 - b2^k)) + eps)
"""

import logging
from typing import Any, Dict, Optional, Tuple

import numpy as np

from src.errors import ShapeError, TrainingDivergedError
from src.models.params import ParamSet

logger = logging.getLogger(__name__)


class AdamW:
    """AdamW over a ParamSet; parameters without a gradient are skipped."""

    def __init__(
        self,
        params: ParamSet,
        lr: float = 1e-4,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 1e-2,
    ):
        if lr < 0:
            raise ValueError(f"Invalid learning rate: {lr}")
        if not (0.0 <= betas[0] < 1.0 and 0.0 <= betas[1] < 1.0):
            raise ValueError(f"Invalid betas: {betas}")
        if eps < 0 or weight_decay < 0:
            raise ValueError(f"Invalid eps/weight_decay: {eps}, {weight_decay}")
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m: Dict[str, np.ndarray] = {p: np.zeros_like(t.data) for p, t in params.items()}
        self.v: Dict[str, np.ndarray] = {p: np.zeros_like(t.data) for p, t in params.items()}

    def zero_grad(self) -> None:
        self.params.zero_grad()

    def check_grads(self, step: Optional[int] = None) -> None:
        """Raise TrainingDivergedError if any gradient is NaN/Inf."""
        for path, tensor in self.params.items():
            if tensor.grad is not None and not np.all(np.isfinite(tensor.grad)):
                raise TrainingDivergedError(f"non-finite gradient for {path}", step=step)

    def step(self) -> None:
        """Apply one update. Gradients are checked before anything changes."""
        self.check_grads(self.step_count + 1)
        self.step_count += 1
        k = self.step_count
        bias1 = 1.0 - self.beta1 ** k
        bias2 = 1.0 - self.beta2 ** k
        for path, tensor in self.params.items():
            grad = tensor.grad
            if grad is None:
                continue
            m = self.beta1 * self.m[path] + (1.0 - self.beta1) * grad
            v = self.beta2 * self.v[path] + (1.0 - self.beta2) * grad * grad
            self.m[path], self.v[path] = m, v
            if self.lr == 0:
                continue
            data = tensor.data * (1.0 - self.lr * self.weight_decay)
            data = data - self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            tensor.data = data.astype(tensor.data.dtype, copy=False)

    def state_dict(self) -> Dict[str, Any]:
        return {
            "step": self.step_count,
            "m": {p: a.copy() for p, a in self.m.items()},
            "v": {p: a.copy() for p, a in self.v.items()},
        }

    def load_state_dict(self, state: Dict[str, Any]) -> None:
        for key in ("m", "v"):
            for path, tensor in self.params.items():
                if path not in state[key]:
                    raise ShapeError(f"optimizer state is missing {key} for {path}")
                if state[key][path].shape != tensor.shape:
                    raise ShapeError(f"optimizer {key} for {path} has shape {list(state[key][path].shape)}")
        self.step_count = int(state["step"])
        self.m = {p: np.array(state["m"][p], dtype=t.data.dtype) for p, t in self.params.items()}
        self.v = {p: np.array(state["v"][p], dtype=t.data.dtype) for p, t in self.params.items()}
