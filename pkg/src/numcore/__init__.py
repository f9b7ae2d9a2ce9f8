"""Tensor algebra, reverse-mode autodiff, seeded RNG and gradient checks."""

from src.numcore.gradcheck import GradCheckReport, grad_check
from src.numcore.rng import Rng, randn
from src.numcore.tensor import (
    Tape,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    conv1d_noncausal,
    get_dtype,
    get_precision,
    index_rows,
    make_op,
    matmul,
    mean,
    mul,
    neg,
    relu,
    reshape,
    scale,
    set_precision,
    sigmoid,
    silu,
    sq_norm,
    sub,
    tanh,
    transpose,
    tsum,
)

__all__ = [
    "GradCheckReport",
    "Rng",
    "Tape",
    "Tensor",
    "add",
    "as_tensor",
    "backward",
    "concat",
    "conv1d_noncausal",
    "get_dtype",
    "get_precision",
    "grad_check",
    "index_rows",
    "make_op",
    "matmul",
    "mean",
    "mul",
    "neg",
    "randn",
    "relu",
    "reshape",
    "scale",
    "set_precision",
    "sigmoid",
    "silu",
    "sq_norm",
    "sub",
    "tanh",
    "transpose",
    "tsum",
]
