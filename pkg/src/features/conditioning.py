"""
Conditioning encoder.

Content, pitch and loudness streams are each linearly projected to
``proj_dim`` channels, concatenated, and the singer embedding is appended to
every frame:

    cond = [content W_c | (ln(1+f0), vuv) W_p | ln(1+loudness) W_l | singer]

giving ``3 * proj_dim + singer_dim`` columns (1024 by default).
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from src.errors import ShapeError
from src.features.content import FeatureSet
from src.models.params import ParamSet, init_weight, zeros
from src.numcore.rng import Rng
from src.numcore.tensor import Tensor, add, concat, get_dtype, index_rows, matmul, reshape

logger = logging.getLogger(__name__)

SingerIds = Union[int, Sequence[int], np.ndarray]


@dataclass(frozen=True)
class CondConfig:
    """Dimensions of the conditioning encoder."""

    content_dim: int = 768
    proj_dim: int = 256
    singer_dim: int = 256
    n_singers: int = 4

    def __post_init__(self):
        for name in ("content_dim", "proj_dim", "singer_dim", "n_singers"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def cond_dim(self) -> int:
        return 3 * self.proj_dim + self.singer_dim


class SingerTable:
    """(n_singers, embed_dim) embedding table."""

    def __init__(self, table: Tensor):
        if table.ndim != 2:
            raise ShapeError(f"singer table must be 2-d, got shape {list(table.shape)}")
        self.table = table

    @property
    def n_singers(self) -> int:
        return self.table.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.table.shape[1]

    def check_ids(self, ids: SingerIds) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if np.any(ids < 0) or np.any(ids >= self.n_singers):
            raise ValueError(f"singer id out of range [0, {self.n_singers}): {ids.tolist()}")
        return ids

    def lookup(self, ids: SingerIds) -> Tensor:
        """Embedding rows: (embed_dim,) for one id, (B, embed_dim) for B ids."""
        return index_rows(self.table, self.check_ids(ids))


def init_encoder_params(config: CondConfig, rng: Rng) -> ParamSet:
    p = config.proj_dim
    params = ParamSet()
    params["encoder/content/weight"] = init_weight(rng, (config.content_dim, p), config.content_dim)
    params["encoder/content/bias"] = zeros((p,))
    params["encoder/pitch/weight"] = init_weight(rng, (2, p), 2)
    params["encoder/pitch/bias"] = zeros((p,))
    params["encoder/loudness/weight"] = init_weight(rng, (1, p), 1)
    params["encoder/loudness/bias"] = zeros((p,))
    params["encoder/singer_table"] = Tensor(rng.normal((config.n_singers, config.singer_dim)), requires_grad=True)
    return params


def _linear(x: np.ndarray, params: ParamSet, name: str) -> Tensor:
    return add(matmul(Tensor(x), params[f"encoder/{name}/weight"]), params[f"encoder/{name}/bias"])


def build_cond_arrays(
    content: np.ndarray,
    f0: np.ndarray,
    vuv: np.ndarray,
    loud: np.ndarray,
    singer_ids: SingerIds,
    table: SingerTable,
    projections: ParamSet,
) -> Tensor:
    """
    Batched form of :func:`build_cond`.

    Streams are (frames, ...) for one item or (batch, frames, ...) for a batch;
    ``singer_ids`` is an int or one id per item.
    """
    content = np.asarray(content, dtype=get_dtype())
    frames_shape = content.shape[:-1]
    for name, stream in (("f0", f0), ("vuv", vuv), ("loudness", loud)):
        if np.shape(stream) != frames_shape:
            raise ShapeError(f"{name} has shape {list(np.shape(stream))}, content frames are {list(frames_shape)}")
    ids = table.check_ids(singer_ids)
    if ids.ndim != len(frames_shape) - 1 or (ids.ndim == 1 and ids.shape[0] != frames_shape[0]):
        raise ShapeError(f"singer ids {list(ids.shape)} do not match feature batch {list(frames_shape)}")

    pitch_in = np.stack([np.log1p(np.asarray(f0, dtype=np.float64)), np.asarray(vuv, dtype=np.float64)], axis=-1)
    loud_in = np.log1p(np.maximum(np.asarray(loud, dtype=np.float64), 0.0))[..., None]

    content_emb = _linear(content, projections, "content")
    pitch_emb = _linear(pitch_in, projections, "pitch")
    loud_emb = _linear(loud_in, projections, "loudness")

    singer = table.lookup(ids)
    singer = reshape(singer, singer.shape[:-1] + (1, table.embed_dim))
    singer = add(singer, np.zeros(frames_shape + (table.embed_dim,), dtype=get_dtype()))
    return concat([content_emb, pitch_emb, loud_emb, singer], axis=-1)


def build_cond(fs: FeatureSet, singer_id: int, table: SingerTable, projections: ParamSet) -> Tensor:
    """
    Conditioning matrix (frames, 3 * proj_dim + singer_dim) for one item.

    Raises:
        ValueError: If ``singer_id`` is out of range
    """
    return build_cond_arrays(fs.content, fs.f0, fs.vuv, fs.loudness, singer_id, table, projections)


class CondEncoder:
    """
    Trainable projections plus singer table.

    Usage:
        encoder = CondEncoder.initialize(CondConfig(n_singers=4), rng)
        cond = encoder(features, singer_id=2)
    """

    def __init__(self, params: ParamSet, config: CondConfig):
        self.params = params
        self.config = config
        self.table = SingerTable(params["encoder/singer_table"])

    @classmethod
    def initialize(cls, config: CondConfig, rng: Rng) -> "CondEncoder":
        return cls(init_encoder_params(config, rng), config)

    @property
    def cond_dim(self) -> int:
        return self.config.cond_dim

    def __call__(self, fs: FeatureSet, singer_id: int) -> Tensor:
        if fs.content_dim != self.config.content_dim:
            raise ShapeError(f"content dimension {fs.content_dim} does not match encoder {self.config.content_dim}")
        return build_cond(fs, singer_id, self.table, self.params)

    def encode_batch(
        self, content: np.ndarray, prosody: np.ndarray, singer_ids: Sequence[int]
    ) -> Tensor:
        """Encode a (batch, frames, ...) batch; prosody columns are f0, vuv, loudness."""
        return build_cond_arrays(
            content,
            prosody[..., 0],
            prosody[..., 1] > 0.5,
            prosody[..., 2],
            np.asarray(singer_ids),
            self.table,
            self.params,
        )
