"""
Seeded random number generation.

A single ``Rng`` object owns a PCG64 stream; identical seeds produce identical
streams across runs and platforms at the same precision. The full generator
state is JSON-serializable so training can resume bit-identically.
"""

import copy
from typing import Any, Dict, List, Sequence, Union

import numpy as np

from src.numcore.tensor import Tensor, get_dtype

Shape = Union[int, Sequence[int]]


class Rng:
    """Reproducible random stream (PCG64)."""

    def __init__(self, seed: int = 0):
        if seed < 0 or seed >= 2 ** 64:
            raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed})"

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def normal(self, shape: Shape = (), loc: float = 0.0, scale: float = 1.0) -> np.ndarray:
        """Gaussian draws as an array in the active precision."""
        out = self._gen.standard_normal(size=shape)
        return np.asarray(loc + scale * out, dtype=get_dtype())

    def uniform(self, low: float = 0.0, high: float = 1.0, shape: Shape = ()) -> np.ndarray:
        return np.asarray(self._gen.uniform(low, high, size=shape), dtype=get_dtype())

    def integers(self, low: int, high: int, shape: Shape = ()) -> Union[int, np.ndarray]:
        """Integers in [low, high)."""
        return self._gen.integers(low, high, size=shape if shape != () else None)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def spawn(self, n: int) -> List["Rng"]:
        """Derive ``n`` independent child streams (deterministic in the seed)."""
        children = np.random.SeedSequence(self.seed).spawn(n)
        out = []
        for child in children:
            rng = Rng.__new__(Rng)
            rng.seed = int(child.generate_state(1, dtype=np.uint64)[0])
            rng._gen = np.random.Generator(np.random.PCG64(child))
            out.append(rng)
        return out

    def get_state(self) -> Dict[str, Any]:
        """Return a JSON-serializable snapshot of the stream position."""
        return {"seed": self.seed, "bit_generator": copy.deepcopy(self._gen.bit_generator.state)}

    def set_state(self, state: Dict[str, Any]) -> None:
        self.seed = int(state["seed"])
        self._gen.bit_generator.state = copy.deepcopy(state["bit_generator"])


def randn(rng: Rng, shape: Shape) -> Tensor:
    """Tensor of i.i.d. standard normal entries; advances ``rng``."""
    return Tensor(rng.normal(shape))
