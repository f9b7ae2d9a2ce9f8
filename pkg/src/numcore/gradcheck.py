"""
Finite-difference gradient checking.

Compares tape gradients of a scalar function against central differences.
Run at 64-bit precision: at 32-bit the finite-difference estimate is too
noisy to be meaningful.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from src.errors import NonDeterministicError
from src.numcore.rng import Rng
from src.numcore.tensor import Tape, Tensor, get_precision

logger = logging.getLogger(__name__)


@dataclass
class GradCheckReport:
    """Worst relative error per parameter."""

    errors: Dict[str, float] = field(default_factory=dict)
    tol: float = 1e-4

    @property
    def passed(self) -> bool:
        return all(err <= self.tol for err in self.errors.values())

    @property
    def worst(self) -> float:
        return max(self.errors.values(), default=0.0)

    def __str__(self) -> str:
        lines = [f"grad_check tol={self.tol:g} passed={self.passed}"]
        for name, err in self.errors.items():
            lines.append(f"  {name}: {err:.3e}")
        return "\n".join(lines)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor)."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    tol: float = 1e-4,
    step: float = 1e-5,
    names: Optional[Sequence[str]] = None,
    max_entries: Optional[int] = None,
    rng: Optional[Rng] = None,
) -> GradCheckReport:
    """
    Check tape gradients of ``f`` against central finite differences.

    ``f`` takes no arguments and must rebuild its computation from the current
    values of ``params`` on each call (any randomness must come from a freshly
    seeded Rng inside ``f``).

    Args:
        f: Deterministic scalar-valued function
        params: Leaf tensors to check (requires_grad is set for the check)
        tol: Pass threshold on the worst relative error
        step: Finite-difference step
        names: Optional display names, defaults to param0, param1, ...
        max_entries: Check at most this many randomly chosen entries per parameter
        rng: Chooses the entries when ``max_entries`` is set

    Returns:
        GradCheckReport with the worst relative error per parameter

    Raises:
        NonDeterministicError: If two identical calls of ``f`` disagree
    """
    if get_precision() != "f64":
        logger.warning("grad_check at %s precision is unreliable; use f64", get_precision())

    names = list(names) if names is not None else [f"param{i}" for i in range(len(params))]
    first = float(f().data)
    second = float(f().data)
    if first != second:
        raise NonDeterministicError(
            f"function returned {first!r} then {second!r} for identical inputs"
        )

    saved = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = True
        p.grad = None
    try:
        with Tape() as tape:
            loss = f()
            tape.backward(loss)
        analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

        report = GradCheckReport(tol=tol)
        for name, p, grad in zip(names, params, analytic):
            flat = p.data.reshape(-1)
            indices = np.arange(flat.size)
            if max_entries is not None and flat.size > max_entries:
                chooser = rng if rng is not None else Rng(0)
                indices = np.sort(chooser.permutation(flat.size)[:max_entries])
            worst = 0.0
            for idx in indices:
                original = flat[idx]
                flat[idx] = original + step
                plus = float(f().data)
                flat[idx] = original - step
                minus = float(f().data)
                flat[idx] = original
                numeric = (plus - minus) / (2.0 * step)
                err = float(relative_error(grad.reshape(-1)[idx], numeric))
                worst = max(worst, err)
            report.errors[name] = worst
    finally:
        for p, flag in zip(params, saved):
            p.requires_grad = flag
            p.grad = None

    logger.debug(str(report))
    return report
