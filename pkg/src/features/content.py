"""
Per-frame feature streams.

Content features come from an external extractor as "COMF" matrix files;
pitch and loudness are computed from audio (or generated synthetically).
All streams of a ``FeatureSet`` share the target mel frame count.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from src.errors import ConfigMismatchError, ShapeError
from src.features.audio import HOP_LENGTH, MelSpec, Wave, estimate_f0, loudness, mel_spectrogram
from src.storage.formats import FEATURE_MAGIC, load_matrix

logger = logging.getLogger(__name__)

CONTENT_DIM = 768


@dataclass
class FeatureSet:
    """Aligned per-frame conditioning streams."""

    content: np.ndarray
    f0: np.ndarray
    vuv: np.ndarray
    loudness: np.ndarray

    def __post_init__(self):
        self.content = np.asarray(self.content, dtype=np.float64)
        self.f0 = np.asarray(self.f0, dtype=np.float64)
        self.vuv = np.asarray(self.vuv, dtype=bool)
        self.loudness = np.asarray(self.loudness, dtype=np.float64)
        if self.content.ndim != 2:
            raise ShapeError(f"content must be (frames, dim), got shape {list(self.content.shape)}")
        frames = self.content.shape[0]
        for name in ("f0", "vuv", "loudness"):
            stream = getattr(self, name)
            if stream.shape != (frames,):
                raise ShapeError(f"{name} has shape {list(stream.shape)}, expected [{frames}]")

    @property
    def frames(self) -> int:
        return self.content.shape[0]

    @property
    def content_dim(self) -> int:
        return self.content.shape[1]

    def prosody(self) -> np.ndarray:
        """(frames, 3) matrix of f0, vuv, loudness."""
        return np.stack([self.f0, self.vuv.astype(np.float64), self.loudness], axis=1)

    @classmethod
    def from_prosody(cls, content: np.ndarray, prosody: np.ndarray) -> "FeatureSet":
        return cls(content=content, f0=prosody[:, 0], vuv=prosody[:, 1] > 0.5, loudness=prosody[:, 2])

    def require_frames(self, frames: int) -> None:
        if self.frames != frames:
            raise ShapeError(f"feature streams have {self.frames} frames, target mel has {frames}")


@dataclass
class DatasetItem:
    """One (target mel, features, singer) example."""

    item_id: str
    mel: MelSpec
    features: FeatureSet
    singer_id: int

    def __post_init__(self):
        self.features.require_frames(self.mel.frames)


def reconcile_frames(matrix: np.ndarray, n_frames: int) -> np.ndarray:
    """
    Match a (frames, dim) matrix to ``n_frames`` rows: extra rows are
    truncated, missing rows repeat the last row (edge padding).
    """
    current = matrix.shape[0]
    if current == n_frames:
        return matrix
    if current == 0:
        raise ShapeError("cannot edge-pad an empty feature matrix")
    if current > n_frames:
        return matrix[:n_frames]
    return np.pad(matrix, ((0, n_frames - current), (0, 0)), mode="edge")


def load_content_features(
    path: Union[str, Path],
    n_frames: Optional[int] = None,
    expected_dim: Optional[int] = None,
) -> np.ndarray:
    """
    Load a content-feature matrix.

    Args:
        path: "COMF" feature file
        n_frames: Target mel frame count to reconcile to (truncate or edge-pad)
        expected_dim: Required feature dimension (e.g. 768)

    Returns:
        (frames, dim) float64 matrix

    Raises:
        FormatError: Malformed header
        ConfigMismatchError: Dimension differs from ``expected_dim``
    """
    matrix = load_matrix(path, magic=FEATURE_MAGIC).astype(np.float64)
    if expected_dim is not None and matrix.shape[1] != expected_dim:
        raise ConfigMismatchError(
            f"{Path(path).name}: content dimension {matrix.shape[1]} does not match configured {expected_dim}"
        )
    if n_frames is not None and matrix.shape[0] != n_frames:
        logger.debug(f"Reconciling {Path(path).name}: {matrix.shape[0]} -> {n_frames} frames")
        matrix = reconcile_frames(matrix, n_frames)
    return matrix


def extract_features(
    wave: Wave,
    content: np.ndarray,
    hop: int = HOP_LENGTH,
    f_min: float = 50.0,
    f_max: float = 1100.0,
) -> tuple[MelSpec, FeatureSet]:
    """
    Compute the target mel and aligned features from real audio.

    ``content`` is reconciled to the mel frame count.
    """
    mel = mel_spectrogram(wave, hop=hop)
    f0, vuv = estimate_f0(wave, hop=hop, f_min=f_min, f_max=f_max)
    loud = loudness(wave, hop=hop)
    features = FeatureSet(
        content=reconcile_frames(np.asarray(content, dtype=np.float64), mel.frames),
        f0=f0,
        vuv=vuv,
        loudness=loud,
    )
    features.require_frames(mel.frames)
    return mel, features
