"""
Tensor algebra with define-by-run reverse-mode automatic differentiation.

Every differentiable operation executed while a :class:`Tape` is active, and
with at least one input that requires a gradient, is appended to that tape.
``Tape.backward(loss)`` replays the records in reverse order, which is a
reverse topological order because records are appended as they execute.

Broadcast rule (fixed): shapes are right-aligned, missing leading dimensions
count as 1, and each aligned pair of dimensions must be equal or one of them
must be 1. This is singleton expansion only; anything else is a ShapeError.

Convolution uses the cross-correlation convention (the kernel is not flipped).
"""

import logging
import threading
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import NonFiniteError, ShapeError, TapeError

logger = logging.getLogger(__name__)

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

PRECISIONS = {"f32": np.float32, "f64": np.float64}

_precision = {"name": "f64"}
_local = threading.local()


# ============================================================================
# Precision
# ============================================================================

def set_precision(name: str) -> None:
    """
    Set the global floating point precision for newly created tensors.

    Args:
        name: "f32" or "f64"
    """
    if name not in PRECISIONS:
        raise ValueError(f"Unknown precision {name!r}; expected one of {sorted(PRECISIONS)}")
    _precision["name"] = name
    logger.debug(f"Tensor precision set to {name}")


def get_precision() -> str:
    """Return the name of the active precision ("f32" or "f64")."""
    return _precision["name"]


def get_dtype() -> np.dtype:
    """Return the numpy dtype of the active precision."""
    return np.dtype(PRECISIONS[_precision["name"]])


def _check_finite(data: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"Non-finite value produced by {op}")
    return data


def _broadcast_shape(a: Tuple[int, ...], b: Tuple[int, ...], op: str) -> Tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(a, b))
    except ValueError:
        raise ShapeError(f"{op}: shapes {list(a)} and {list(b)} are not broadcast-compatible") from None


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ============================================================================
# Tape
# ============================================================================

class _Record:
    __slots__ = ("out", "parents", "backward")

    def __init__(self, out: "Tensor", parents: Tuple["Tensor", ...], backward: BackwardFn):
        self.out = out
        self.parents = parents
        self.backward = backward


def _tape_stack() -> List["Tape"]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = []
        _local.stack = stack
    return stack


def active_tape() -> Optional["Tape"]:
    """Return the innermost active tape of this thread, if any."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """
    Ordered record of differentiable operations.

    A tape is single-threaded and single-use: it is rebuilt for every
    training step, and ``backward`` consumes it.

    Usage:
        with Tape() as tape:
            loss = model_loss(...)
            tape.backward(loss)
    """

    def __init__(self):
        self._records: List[_Record] = []
        self._produced: set[int] = set()
        self._consumed = False

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self._records)

    @property
    def consumed(self) -> bool:
        return self._consumed

    def record(self, out: "Tensor", parents: Tuple["Tensor", ...], backward: BackwardFn) -> None:
        """Append an executed operation."""
        if self._consumed:
            raise TapeError("Cannot record onto a consumed tape")
        self._records.append(_Record(out, parents, backward))
        self._produced.add(id(out))

    def backward(self, loss: "Tensor") -> None:
        """
        Populate ``grad`` of every leaf reachable from ``loss``.

        Gradients accumulate into existing ``grad`` arrays; call
        ``zero_grad`` on parameters between steps.

        Args:
            loss: Scalar tensor computed on this tape

        Raises:
            ShapeError: If loss is not a scalar
            TapeError: If the tape was already consumed or loss is not on it
        """
        if self._consumed:
            raise TapeError("backward called twice on the same tape")
        if loss.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {list(loss.shape)}")
        if id(loss) not in self._produced:
            raise TapeError("loss was not produced on this tape (no parameter requires grad?)")

        grads = {id(loss): np.ones_like(loss.data)}
        tensors = {id(loss): loss}
        for rec in reversed(self._records):
            grad_out = grads.pop(id(rec.out), None)
            if grad_out is None:
                continue
            parent_grads = rec.backward(grad_out)
            for parent, pgrad in zip(rec.parents, parent_grads):
                if pgrad is None or not parent.requires_grad:
                    continue
                pgrad = _unbroadcast(np.asarray(pgrad), parent.shape)
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pgrad
                else:
                    grads[key] = pgrad
                    tensors[key] = parent

        for key, grad in grads.items():
            tensor = tensors[key]
            if key in self._produced or not tensor.requires_grad:
                continue
            grad = grad.astype(tensor.data.dtype, copy=False).reshape(tensor.shape)
            tensor.grad = grad if tensor.grad is None else tensor.grad + grad

        self._consumed = True
        self._records = []
        self._produced = set()


def backward(loss: "Tensor") -> None:
    """Run backward on the tape that produced ``loss``."""
    tape = getattr(loss, "_tape", None)
    if tape is None:
        raise TapeError("loss is not on an active tape")
    tape.backward(loss)


# ============================================================================
# Tensor
# ============================================================================

class Tensor:
    """
    N-dimensional array with optional gradient tape participation.

    Tensors are immutable after creation except through optimizer updates
    (and the controlled perturbations of gradient checking).
    """

    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.array(data, dtype=get_dtype())
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._tape: Optional[Tape] = None

    # ------------------------------------------------------------------
    # basic properties
    # ------------------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def __repr__(self) -> str:
        return f"Tensor(shape={list(self.shape)}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.shape[0]

    def numpy(self) -> np.ndarray:
        """Return the underlying array (not a copy)."""
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() requires a single element, got shape {list(self.shape)}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Return a tensor sharing no tape history (stop-gradient)."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.requires_grad = False
        out.grad = None
        out._tape = None
        return out

    def zero_grad(self) -> None:
        self.grad = None

    # ------------------------------------------------------------------
    # arithmetic
    # ------------------------------------------------------------------

    def __add__(self, other: ArrayLike) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: Union[float, np.ndarray]) -> "Tensor":
        if isinstance(other, Tensor):
            raise TypeError("Division by a Tensor is not supported; divide by a constant")
        return mul(self, 1.0 / np.asarray(other, dtype=get_dtype()))

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, index) -> "Tensor":
        return getitem(self, index)

    # ------------------------------------------------------------------
    # method forms
    # ------------------------------------------------------------------

    def tanh(self) -> "Tensor":
        return tanh(self)

    def sigmoid(self) -> "Tensor":
        return sigmoid(self)

    def relu(self) -> "Tensor":
        return relu(self)

    def silu(self) -> "Tensor":
        return silu(self)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def transpose(self, *axes: int) -> "Tensor":
        return transpose(self, axes if axes else None)

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(value: ArrayLike) -> Tensor:
    """Wrap constants as non-differentiable tensors; pass tensors through."""
    return value if isinstance(value, Tensor) else Tensor(value)


def make_op(data: np.ndarray, parents: Sequence[Tensor], backward_fn: BackwardFn, name: str = "op") -> Tensor:
    """
    Create the output of a differentiable operation.

    This is the single entry point through which all ops (including custom
    ones) join the active tape.

    Args:
        data: Forward result
        parents: Input tensors, in the order ``backward_fn`` returns grads
        backward_fn: Maps the output gradient to one gradient (or None) per parent
        name: Operation name used in error messages

    Returns:
        Output tensor, recorded on the active tape when any parent requires grad
    """
    out = Tensor.__new__(Tensor)
    out.data = _check_finite(np.asarray(data, dtype=get_dtype()), name)
    out.requires_grad = False
    out.grad = None
    out._tape = None
    tape = active_tape()
    parents = tuple(parents)
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._tape = tape
        tape.record(out, parents, backward_fn)
    return out


# ============================================================================
# Elementwise and linear ops
# ============================================================================

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "add")
    return make_op(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "sub")
    return make_op(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "mul")
    return make_op(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def scale(a: ArrayLike, factor: float) -> Tensor:
    """Multiply by a scalar constant."""
    return mul(a, float(factor))


def neg(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return make_op(-a.data, (a,), lambda g: (-g,), "neg")


def tanh(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return make_op(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    y = _sigmoid(a.data)
    return make_op(y, (a,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def relu(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return make_op(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def silu(a: ArrayLike) -> Tensor:
    """x * sigmoid(x)."""
    a = as_tensor(a)
    s = _sigmoid(a.data)
    return make_op(a.data * s, (a,), lambda g: (g * (s + a.data * s * (1.0 - s)),), "silu")


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """
    Matrix product over the last two axes (leading axes broadcast).

    Both operands must have at least two dimensions.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul requires >=2-d operands, got shapes {list(a.shape)} and {list(b.shape)}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {list(a.shape)} and {list(b.shape)} are not aligned")
    _broadcast_shape(a.shape[:-2], b.shape[:-2], "matmul")

    def _backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return ga, gb

    return make_op(np.matmul(a.data, b.data), (a, b), _backward, "matmul")


def _normalize_axes(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def tsum(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    """Sum over ``axis`` (all axes when None)."""
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    shape = a.shape

    def _backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes) if axes else g
        return (np.broadcast_to(g, shape),)

    return make_op(a.data.sum(axis=axes, keepdims=keepdims), (a,), _backward, "sum")


def mean(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def sq_norm(a: ArrayLike) -> Tensor:
    """Squared L2 norm: sum of squares of all entries."""
    a = as_tensor(a)
    return make_op(np.sum(a.data * a.data), (a,), lambda g: (2.0 * g * a.data,), "sq_norm")


def transpose(a: ArrayLike, axes: Optional[Sequence[int]] = None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return make_op(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),), "transpose")


def reshape(a: ArrayLike, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    original = a.shape
    try:
        data = a.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {list(original)} into {list(shape)}") from None
    return make_op(data, (a,), lambda g: (g.reshape(original),), "reshape")


def getitem(a: ArrayLike, index) -> Tensor:
    """Basic/advanced indexing with a scatter-add backward."""
    a = as_tensor(a)
    shape = a.shape
    parts = index if isinstance(index, tuple) else (index,)
    advanced = any(isinstance(p, (list, np.ndarray, Tensor)) for p in parts)
    if any(isinstance(p, Tensor) for p in parts):
        raise TypeError("index with integer arrays, not Tensors")

    def _backward(g):
        full = np.zeros(shape, dtype=g.dtype)
        if advanced:
            np.add.at(full, index, g)
        else:
            full[index] += g
        return (full,)

    return make_op(a.data[index], (a,), _backward, "getitem")


def concat(tensors: Sequence[ArrayLike], axis: int = -1) -> Tensor:
    """Concatenate along ``axis``; all other dimensions must match."""
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ShapeError("concat requires at least one tensor")
    ndim = parts[0].ndim
    axis = axis % ndim
    for p in parts[1:]:
        if p.ndim != ndim or any(
            p.shape[d] != parts[0].shape[d] for d in range(ndim) if d != axis
        ):
            raise ShapeError(
                f"concat: shapes {list(parts[0].shape)} and {list(p.shape)} differ off axis {axis}"
            )
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def _backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_op(np.concatenate([p.data for p in parts], axis=axis), parts, _backward, "concat")


def index_rows(table: ArrayLike, ids: Union[int, Sequence[int], np.ndarray]) -> Tensor:
    """Gather rows of a 2-d table (embedding lookup)."""
    table = as_tensor(table)
    if table.ndim != 2:
        raise ShapeError(f"index_rows requires a 2-d table, got shape {list(table.shape)}")
    ids = np.asarray(ids, dtype=np.int64)
    if np.any(ids < 0) or np.any(ids >= table.shape[0]):
        raise IndexError(f"row id out of range [0, {table.shape[0]})")
    shape = table.shape

    def _backward(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, ids, g)
        return (full,)

    return make_op(table.data[ids], (table,), _backward, "index_rows")


# ============================================================================
# Convolution
# ============================================================================

def conv1d_noncausal(x: ArrayLike, kernel: ArrayLike, dilation: int = 1) -> Tensor:
    """
    Non-causal dilated 1-d convolution (cross-correlation, no kernel flip).

    ``out[..., o, t] = sum_{i, j} kernel[o, i, j] * x[..., i, t + j*dilation - pad]``
    with symmetric zero padding ``pad = (k - 1) // 2 * dilation`` so the frame
    count is preserved and the receptive field is centered.

    Args:
        x: Input of shape (channels, frames) or (batch, channels, frames)
        kernel: Weights of shape (out, in, k), k odd
        dilation: Spacing between kernel taps (>= 1)

    Returns:
        Tensor of shape (..., out, frames)
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if kernel.ndim != 3:
        raise ShapeError(f"conv1d kernel must be (out, in, k), got shape {list(kernel.shape)}")
    c_out, c_in, k = kernel.shape
    if k % 2 == 0:
        raise ShapeError(f"conv1d kernel size must be odd for a centered receptive field, got {k}")
    if dilation < 1:
        raise ValueError(f"dilation must be >= 1, got {dilation}")
    if x.ndim not in (2, 3) or x.shape[-2] != c_in:
        raise ShapeError(f"conv1d: input shape {list(x.shape)} does not match kernel shape {list(kernel.shape)}")

    frames = x.shape[-1]
    pad = (k - 1) // 2 * dilation
    pad_width = [(0, 0)] * (x.ndim - 1) + [(pad, pad)]
    xp = np.pad(x.data, pad_width)
    cols = np.stack([xp[..., j * dilation: j * dilation + frames] for j in range(k)], axis=-2)
    cols = cols.reshape(cols.shape[:-3] + (c_in * k, frames))
    w2 = kernel.data.reshape(c_out, c_in * k)
    out = np.matmul(w2, cols)

    def _backward(g):
        if g.ndim == 3:
            gw = np.einsum("bot,bct->oc", g, cols)
        else:
            gw = g @ cols.T
        gcols = np.matmul(w2.T, g).reshape(g.shape[:-2] + (c_in, k, frames))
        gxp = np.zeros(xp.shape, dtype=g.dtype)
        for j in range(k):
            gxp[..., j * dilation: j * dilation + frames] += gcols[..., j, :]
        gx = gxp[..., pad: pad + frames]
        return gx, gw.reshape(kernel.shape)

    return make_op(out, (x, kernel), _backward, "conv1d")
