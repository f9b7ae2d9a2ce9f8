"""
Conditional mel denoiser.

The raw network F is a non-causal WaveNet: an input 1x1 projection, a stack
of gated residual layers with dilated convolutions (dilations 1, 2, 4, ...
repeating every ``dilation_cycle`` layers), per-layer 1x1 conditioning and an
added time embedding before the gate, skip connections summed over layers,
and a zero-initialized output projection.

The preconditioned wrapper

    D(x, t, cond) = c_skip(t) x + c_out(t) F(c_in(t) x, c_noise(t), cond)

satisfies D(x, epsilon, cond) = x exactly.
"""

import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import Dict, Optional, Tuple

import numpy as np

from src.diffusion.protocol import NoiseLevel
from src.diffusion.schedule import Precond, append_dims, precond_coeffs
from src.errors import ConfigMismatchError, ScheduleError, ShapeError
from src.models.params import ParamSet, init_weight, zeros
from src.numcore.rng import Rng
from src.numcore.tensor import (
    Tensor,
    add,
    conv1d_noncausal,
    matmul,
    mul,
    relu,
    reshape,
    sigmoid,
    silu,
    tanh,
    transpose,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WaveNetConfig:
    """Shape of the denoiser network."""

    n_layers: int = 4
    residual_channels: int = 16
    dilation_cycle: int = 2
    kernel_size: int = 3
    cond_dim: int = 1024
    mel_bins: int = 80
    time_embed_dim: int = 16

    def __post_init__(self):
        for name in ("n_layers", "residual_channels", "dilation_cycle", "kernel_size", "mel_bins", "time_embed_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.cond_dim < 0:
            raise ValueError(f"cond_dim must be >= 0 (0 disables conditioning), got {self.cond_dim}")
        if self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.time_embed_dim % 2:
            raise ValueError(f"time_embed_dim must be even, got {self.time_embed_dim}")

    @property
    def conditioned(self) -> bool:
        return self.cond_dim > 0

    def dilation(self, layer: int) -> int:
        return 2 ** (layer % self.dilation_cycle)

    def to_dict(self) -> Dict[str, int]:
        return asdict(self)


PRESETS: Dict[str, WaveNetConfig] = {
    "tiny": WaveNetConfig(n_layers=4, residual_channels=16, dilation_cycle=2, time_embed_dim=16),
    "full": WaveNetConfig(n_layers=20, residual_channels=256, dilation_cycle=10, time_embed_dim=256),
}


def preset(name: str, **overrides) -> WaveNetConfig:
    """Return a named preset with optional field overrides."""
    if name not in PRESETS:
        raise ValueError(f"unknown network preset {name!r}; expected one of {sorted(PRESETS)}")
    return replace(PRESETS[name], **overrides)


# ============================================================================
# Parameters
# ============================================================================

def param_layout(config: WaveNetConfig) -> Dict[str, Tuple[Tuple[int, ...], int]]:
    """
    Path -> (shape, fan_in) for every parameter. A fan_in of 0 marks tensors
    that start at zero (biases and the output projection).
    """
    c, e, m, k = config.residual_channels, config.time_embed_dim, config.mel_bins, config.kernel_size
    layout: Dict[str, Tuple[Tuple[int, ...], int]] = {
        "input/kernel": ((c, m, 1), m),
        "input/bias": ((c, 1), 0),
        "time/fc1/weight": ((e, 4 * e), e),
        "time/fc1/bias": ((4 * e,), 0),
        "time/fc2/weight": ((4 * e, e), 4 * e),
        "time/fc2/bias": ((e,), 0),
    }
    for i in range(config.n_layers):
        prefix = f"layer{i}"
        layout[f"{prefix}/dilated_kernel"] = ((2 * c, c, k), c * k)
        layout[f"{prefix}/dilated_bias"] = ((2 * c, 1), 0)
        layout[f"{prefix}/time_proj/weight"] = ((e, 2 * c), e)
        layout[f"{prefix}/time_proj/bias"] = ((2 * c,), 0)
        if config.conditioned:
            layout[f"{prefix}/cond_kernel"] = ((2 * c, config.cond_dim, 1), config.cond_dim)
            layout[f"{prefix}/cond_bias"] = ((2 * c, 1), 0)
        layout[f"{prefix}/out_kernel"] = ((2 * c, c, 1), c)
        layout[f"{prefix}/out_bias"] = ((2 * c, 1), 0)
    layout["skip/kernel"] = ((c, c, 1), c)
    layout["skip/bias"] = ((c, 1), 0)
    layout["output/kernel"] = ((m, c, 1), 0)
    layout["output/bias"] = ((m, 1), 0)
    return layout


def init_denoiser_params(config: WaveNetConfig, rng: Rng) -> ParamSet:
    """
    Draw a fresh parameter set. The output projection starts at zero, so
    F = 0 and D = c_skip x before training.
    """
    params = ParamSet()
    for path, (shape, fan_in) in param_layout(config).items():
        params[path] = init_weight(rng, shape, fan_in) if fan_in else zeros(shape)
    logger.debug(f"Initialized denoiser with {params.num_parameters()} parameters")
    return params


def check_params(params: ParamSet, config: WaveNetConfig) -> None:
    """Raise ConfigMismatchError if ``params`` were not built for ``config``."""
    expected = {path: shape for path, (shape, _) in param_layout(config).items()}
    actual = params.shapes()
    if expected != actual:
        diff = sorted(set(expected.items()) ^ set(actual.items()))
        raise ConfigMismatchError(f"denoiser parameters do not match network config: {diff[:3]}")


# ============================================================================
# Time embedding
# ============================================================================

def sinusoidal_embedding(c_noise: NoiseLevel, dim: int) -> np.ndarray:
    """
    Pre-perceptron embedding: [sin(c w_0), ..., sin(c w_{h-1}), cos(c w_0), ...]
    with w_k = 10000^(-k/h), h = dim/2.

    Returns an array of shape (dim,) for a scalar, (B, dim) for B levels.
    """
    if dim % 2:
        raise ShapeError(f"time embedding dimension must be even, got {dim}")
    half = dim // 2
    freqs = np.power(10000.0, -np.arange(half, dtype=np.float64) / half)
    c = np.asarray(c_noise, dtype=np.float64)
    angles = c[..., None] * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)


def time_embedding(c_noise: NoiseLevel, dim: int, params: ParamSet) -> Tensor:
    """Sinusoidal embedding followed by a two-layer SiLU perceptron."""
    emb = Tensor(sinusoidal_embedding(c_noise, dim))
    if emb.ndim == 1:
        emb = reshape(emb, (1, dim))
        squeeze = True
    else:
        squeeze = False
    h = silu(add(matmul(emb, params["time/fc1/weight"]), params["time/fc1/bias"]))
    out = add(matmul(h, params["time/fc2/weight"]), params["time/fc2/bias"])
    return reshape(out, (dim,)) if squeeze else out


# ============================================================================
# Network
# ============================================================================

def _channels_first(cond: Tensor) -> Tensor:
    """(..., frames, d) -> (..., d, frames)."""
    axes = tuple(range(cond.ndim - 2)) + (cond.ndim - 1, cond.ndim - 2)
    return transpose(cond, axes)


def _time_bias(t_embed: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Project the time embedding to a per-channel bias of shape (..., 2C, 1)."""
    if t_embed.ndim == 1:
        proj = add(matmul(reshape(t_embed, (1, t_embed.shape[0])), weight), bias)
        return reshape(proj, (weight.shape[1], 1))
    proj = add(matmul(t_embed, weight), bias)
    return reshape(proj, proj.shape + (1,))


def f_forward(
    params: ParamSet,
    config: WaveNetConfig,
    x_scaled: Tensor,
    t_embed: Tensor,
    cond: Optional[Tensor] = None,
) -> Tensor:
    """
    Raw network F.

    Args:
        params: Denoiser parameters
        config: Network shape
        x_scaled: (mel_bins, frames) or (batch, mel_bins, frames)
        t_embed: (time_embed_dim,) or (batch, time_embed_dim)
        cond: (frames, cond_dim) or (batch, frames, cond_dim); ignored when
            conditioning is disabled

    Returns:
        Tensor with the shape of ``x_scaled``

    Raises:
        ShapeError: On mel-bin or frame-count mismatch
    """
    if x_scaled.ndim not in (2, 3) or x_scaled.shape[-2] != config.mel_bins:
        raise ShapeError(
            f"denoiser input shape {list(x_scaled.shape)} does not have {config.mel_bins} mel bins"
        )
    frames = x_scaled.shape[-1]
    cond_cf = None
    if config.conditioned:
        if cond is None:
            raise ShapeError("conditioning is enabled but no cond was given")
        if cond.shape[-2] != frames:
            raise ShapeError(f"cond has {cond.shape[-2]} frames, input has {frames}")
        if cond.shape[-1] != config.cond_dim:
            raise ShapeError(f"cond dimension {cond.shape[-1]} does not match network cond_dim {config.cond_dim}")
        cond_cf = _channels_first(cond)

    c = config.residual_channels
    h = relu(add(conv1d_noncausal(x_scaled, params["input/kernel"]), params["input/bias"]))
    skip = None
    for i in range(config.n_layers):
        prefix = f"layer{i}"
        y = conv1d_noncausal(h, params[f"{prefix}/dilated_kernel"], dilation=config.dilation(i))
        y = add(y, params[f"{prefix}/dilated_bias"])
        y = add(y, _time_bias(t_embed, params[f"{prefix}/time_proj/weight"], params[f"{prefix}/time_proj/bias"]))
        if cond_cf is not None:
            y = add(y, add(conv1d_noncausal(cond_cf, params[f"{prefix}/cond_kernel"]), params[f"{prefix}/cond_bias"]))
        gate, filt = y[..., :c, :], y[..., c:, :]
        z = mul(sigmoid(gate), tanh(filt))
        out = add(conv1d_noncausal(z, params[f"{prefix}/out_kernel"]), params[f"{prefix}/out_bias"])
        residual, skip_i = out[..., :c, :], out[..., c:, :]
        h = add(h, residual) / math.sqrt(2.0)
        skip = skip_i if skip is None else add(skip, skip_i)

    s = skip / math.sqrt(config.n_layers)
    s = relu(add(conv1d_noncausal(s, params["skip/kernel"]), params["skip/bias"]))
    return add(conv1d_noncausal(s, params["output/kernel"]), params["output/bias"])


def denoise(
    params: ParamSet,
    config: WaveNetConfig,
    x_t: Tensor,
    t: NoiseLevel,
    cond: Optional[Tensor],
    p: Precond,
) -> Tensor:
    """
    Preconditioned denoiser D(x_t, t, cond), an estimate of x_0.

    ``t`` is one level for all items or one level per batch item.

    Raises:
        ScheduleError: If t is outside [epsilon, t_max]
    """
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr > p.t_max):
        raise ScheduleError(f"noise level above t_max={p.t_max}: max t={float(np.max(t_arr))}")
    if t_arr.ndim == 1 and (x_t.ndim != 3 or x_t.shape[0] != t_arr.shape[0]):
        raise ShapeError(f"per-item noise levels {list(t_arr.shape)} do not match input {list(x_t.shape)}")
    c_skip, c_out, c_in, c_noise = precond_coeffs(t_arr, p)
    c_skip, c_out, c_in = (append_dims(c, x_t.ndim) for c in (c_skip, c_out, c_in))
    t_embed = time_embedding(c_noise, config.time_embed_dim, params)
    f = f_forward(params, config, mul(x_t, c_in), t_embed, cond)
    return add(mul(x_t, c_skip), mul(f, c_out))


class NetworkDenoiser:
    """
    Callable denoiser bound to one parameter set.

    Usage:
        denoiser = NetworkDenoiser(params, config, Precond(sigma_data=0.5))
        x0_hat = denoiser(x_t, 1.0, cond)
    """

    def __init__(self, params: ParamSet, config: WaveNetConfig, precond: Precond):
        self.params = params
        self.config = config
        self.precond = precond
        self.nfe = 0

    def __call__(self, x: Tensor, t: NoiseLevel, cond: Optional[Tensor] = None) -> Tensor:
        self.nfe += 1
        return denoise(self.params, self.config, x, t, cond, self.precond)

    def reset_nfe(self) -> None:
        self.nfe = 0

    def output_shape(self, cond: Tensor) -> Tuple[int, ...]:
        """Mel shape implied by a conditioning matrix."""
        if cond.ndim == 2:
            return (self.config.mel_bins, cond.shape[0])
        return (cond.shape[0], self.config.mel_bins, cond.shape[1])
