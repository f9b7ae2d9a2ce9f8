"""
Mini-batch assembly.

Items of different lengths are cropped at random offsets to a common segment
length (at most ``segment_frames``, at most the shortest item drawn), giving
dense (batch, mel_bins, frames) targets. Mels are normalized with global
dataset statistics before training.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from src.diffusion.oracle import GaussianSpec
from src.features.content import DatasetItem
from src.numcore.rng import Rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MelNormalizer:
    """Global mean/std normalization of log-mel values."""

    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.std) or self.std <= 0:
            raise ValueError(f"normalization std must be positive, got {self.std}")

    @classmethod
    def fit(cls, items: Sequence[DatasetItem]) -> "MelNormalizer":
        if not items:
            raise ValueError("cannot fit normalization statistics on an empty dataset")
        values = np.concatenate([item.mel.values.reshape(-1) for item in items])
        std = float(values.std())
        return cls(mean=float(values.mean()), std=std if std > 0 else 1.0)

    def normalize(self, mel: np.ndarray) -> np.ndarray:
        return (mel - self.mean) / self.std

    def denormalize(self, mel: np.ndarray) -> np.ndarray:
        return mel * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mel_mean": self.mean, "mel_std": self.std}


@dataclass
class Batch:
    """
    Training batch. ``x0`` is (batch, mel_bins, frames); conditioning streams
    are (batch, frames, ...) and None for unconditional data.
    """

    x0: np.ndarray
    content: Optional[np.ndarray] = None
    prosody: Optional[np.ndarray] = None
    singer_ids: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return self.x0.shape[0]

    @property
    def has_cond(self) -> bool:
        return self.content is not None


def crop_batch(
    items: Sequence[DatasetItem],
    rng: Rng,
    segment_frames: int,
    normalizer: MelNormalizer = MelNormalizer(),
) -> Batch:
    """Crop ``items`` to a common length at random offsets."""
    if not items:
        raise ValueError("batch must be nonempty")
    length = min(segment_frames, min(item.mel.frames for item in items))
    mels, contents, prosodies = [], [], []
    for item in items:
        start = int(rng.integers(0, item.mel.frames - length + 1))
        stop = start + length
        mels.append(normalizer.normalize(item.mel.values[start:stop]).T)
        contents.append(item.features.content[start:stop])
        prosodies.append(item.features.prosody()[start:stop])
    return Batch(
        x0=np.stack(mels),
        content=np.stack(contents),
        prosody=np.stack(prosodies),
        singer_ids=np.array([item.singer_id for item in items], dtype=np.int64),
    )


class BatchSampler:
    """
    Draw random cropped batches from a dataset.

    Usage:
        sampler = BatchSampler(items, batch_size=8, segment_frames=64, normalizer=norm)
        batch = sampler.sample(rng)
    """

    def __init__(
        self,
        items: Sequence[DatasetItem],
        batch_size: int,
        segment_frames: int,
        normalizer: MelNormalizer = MelNormalizer(),
    ):
        if not items:
            raise ValueError("dataset is empty")
        if batch_size < 1 or segment_frames < 1:
            raise ValueError("batch_size and segment_frames must be positive")
        self.items = list(items)
        self.batch_size = batch_size
        self.segment_frames = segment_frames
        self.normalizer = normalizer

    def sample(self, rng: Rng) -> Batch:
        picks = rng.integers(0, len(self.items), self.batch_size)
        return crop_batch([self.items[int(i)] for i in picks], rng, self.segment_frames, self.normalizer)


class GaussianBatchSampler:
    """Unconditional batches of Gaussian data (x0 ~ N(mu, sigma_d^2))."""

    def __init__(self, spec: GaussianSpec, batch_size: int, mel_bins: int = 1, frames: int = 8):
        self.spec = spec
        self.batch_size = batch_size
        self.shape = (batch_size, mel_bins, frames)

    def sample(self, rng: Rng) -> Batch:
        return Batch(x0=self.spec.sample(rng, self.shape))
