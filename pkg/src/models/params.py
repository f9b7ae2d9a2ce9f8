"""
Named parameter sets.

A ``ParamSet`` maps parameter paths (e.g. ``layer3/dilated_kernel``) to leaf
tensors. Teacher, student and EMA target are three instances with identical
paths and shapes.
"""

import hashlib
import logging
from typing import Dict, Iterator, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.errors import ShapeError
from src.numcore.rng import Rng
from src.numcore.tensor import Tensor, get_dtype

logger = logging.getLogger(__name__)


class ParamSet:
    """Ordered mapping from parameter path to Tensor."""

    def __init__(self, tensors: Optional[Mapping[str, Tensor]] = None):
        self._tensors: Dict[str, Tensor] = dict(tensors or {})

    # ------------------------------------------------------------------
    # mapping interface
    # ------------------------------------------------------------------

    def __getitem__(self, path: str) -> Tensor:
        try:
            return self._tensors[path]
        except KeyError:
            raise KeyError(f"no parameter named {path!r}") from None

    def __setitem__(self, path: str, tensor: Tensor) -> None:
        self._tensors[path] = tensor

    def __contains__(self, path: str) -> bool:
        return path in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def __repr__(self) -> str:
        return f"ParamSet({len(self)} tensors, {self.num_parameters()} values)"

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self._tensors.items())

    def paths(self) -> Sequence[str]:
        return list(self._tensors)

    def tensors(self) -> Sequence[Tensor]:
        return list(self._tensors.values())

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {path: t.shape for path, t in self._tensors.items()}

    def num_parameters(self) -> int:
        return sum(t.size for t in self._tensors.values())

    # ------------------------------------------------------------------
    # structure
    # ------------------------------------------------------------------

    def same_shape(self, other: "ParamSet") -> bool:
        """True iff both sets have the same paths with the same shapes."""
        return self.shapes() == other.shapes()

    def require_same_shape(self, other: "ParamSet", what: str = "parameter sets") -> None:
        if self.same_shape(other):
            return
        mine, theirs = self.shapes(), other.shapes()
        missing = sorted(set(mine) ^ set(theirs))
        if missing:
            raise ShapeError(f"{what} differ in paths: {missing[:5]}")
        bad = [p for p in mine if mine[p] != theirs[p]]
        raise ShapeError(
            f"{what} differ in shape at {bad[0]}: {list(mine[bad[0]])} vs {list(theirs[bad[0]])}"
        )

    def copy(self, requires_grad: Optional[bool] = None) -> "ParamSet":
        """Deep copy; ``requires_grad`` overrides the flag on every tensor."""
        out = ParamSet()
        for path, tensor in self._tensors.items():
            flag = tensor.requires_grad if requires_grad is None else requires_grad
            out[path] = Tensor(tensor.data.copy(), requires_grad=flag)
        return out

    def subset(self, prefix: str) -> "ParamSet":
        """View of the tensors under ``prefix/`` (tensors are shared, not copied)."""
        head = prefix.rstrip("/") + "/"
        return ParamSet({p: t for p, t in self._tensors.items() if p.startswith(head)})

    def merged(self, other: "ParamSet") -> "ParamSet":
        """Union of two sets sharing tensors; paths must not overlap."""
        overlap = set(self._tensors) & set(other._tensors)
        if overlap:
            raise ValueError(f"parameter paths overlap: {sorted(overlap)[:5]}")
        return ParamSet({**self._tensors, **dict(other.items())})

    def requires_grad_(self, flag: bool) -> "ParamSet":
        for tensor in self._tensors.values():
            tensor.requires_grad = flag
        return self

    def zero_grad(self) -> None:
        for tensor in self._tensors.values():
            tensor.grad = None

    def grads(self) -> Dict[str, Optional[np.ndarray]]:
        return {path: t.grad for path, t in self._tensors.items()}

    # ------------------------------------------------------------------
    # values
    # ------------------------------------------------------------------

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        """Overwrite values in place from a path -> array mapping."""
        for path, tensor in self._tensors.items():
            if path not in arrays:
                raise ShapeError(f"missing parameter {path!r}")
            value = np.asarray(arrays[path])
            if value.shape != tensor.shape:
                raise ShapeError(
                    f"parameter {path!r} has shape {list(value.shape)}, expected {list(tensor.shape)}"
                )
            tensor.data = value.astype(get_dtype(), copy=True)

    def arrays(self) -> Dict[str, np.ndarray]:
        return {path: t.data for path, t in self._tensors.items()}

    def blend_(self, other: "ParamSet", mu: float) -> None:
        """In place: self <- mu * self + (1 - mu) * other."""
        self.require_same_shape(other, "blended parameter sets")
        for path, tensor in self._tensors.items():
            tensor.data = mu * tensor.data + (1.0 - mu) * other[path].data

    def digest(self) -> str:
        """SHA-256 over paths, shapes and raw little-endian bytes."""
        hasher = hashlib.sha256()
        for path in sorted(self._tensors):
            data = self._tensors[path].data
            hasher.update(path.encode("utf-8"))
            hasher.update(str(data.shape).encode("utf-8"))
            hasher.update(data.astype(data.dtype.newbyteorder("<"), copy=False).tobytes())
        return hasher.hexdigest()

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t.data)) for t in self._tensors.values())


def init_weight(rng: Rng, shape: Sequence[int], fan_in: int) -> Tensor:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization."""
    bound = 1.0 / np.sqrt(max(1, fan_in))
    return Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)


def zeros(shape: Sequence[int]) -> Tensor:
    return Tensor(np.zeros(tuple(shape), dtype=get_dtype()), requires_grad=True)
