"""Common call signature of network and analytic denoisers."""

from typing import Optional, Protocol, Union, runtime_checkable

import numpy as np

from src.numcore.tensor import Tensor

NoiseLevel = Union[float, np.ndarray]


@runtime_checkable
class Denoiser(Protocol):
    """
    Estimate of the clean sample given a noisy one.

    ``t`` is either one noise level or one level per batch item. ``nfe``
    counts evaluations since construction or the last ``reset_nfe``.
    """

    nfe: int

    def __call__(self, x: Tensor, t: NoiseLevel, cond: Optional[Tensor] = None) -> Tensor:
        ...

    def reset_nfe(self) -> None:
        ...
