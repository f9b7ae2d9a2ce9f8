"""
Synthetic conditional dataset.

Each item's target is a harmonic-stack log-mel pattern rendered from its F0
contour, voicing, loudness contour and a singer-specific spectral tilt, so
the mel is a deterministic function of the conditioning and the generation
task is solvable. Content features are drawn from a shared phoneme codebook
in short segments.
"""

import logging
from dataclasses import dataclass
from typing import List

import librosa
import numpy as np

from src.features.audio import HOP_LENGTH, N_MELS, SAMPLE_RATE, MelSpec, mel_center_frequencies
from src.features.content import DatasetItem, FeatureSet
from src.numcore.rng import Rng

logger = logging.getLogger(__name__)

HARMONIC_WIDTH = 0.6
MEL_FLOOR = 1e-4


@dataclass(frozen=True)
class SynthSpec:
    """What to generate."""

    n_items: int = 64
    frames_min: int = 32
    frames_max: int = 96
    n_singers: int = 4
    content_dim: int = 768
    n_phonemes: int = 24
    n_mels: int = N_MELS
    sample_rate: int = SAMPLE_RATE
    hop: int = HOP_LENGTH

    def __post_init__(self):
        if self.n_items < 0:
            raise ValueError(f"n_items must be >= 0, got {self.n_items}")
        if not 1 <= self.frames_min <= self.frames_max:
            raise ValueError(f"need 1 <= frames_min <= frames_max, got {self.frames_min}, {self.frames_max}")
        if self.n_singers < 1 or self.n_phonemes < 1 or self.content_dim < 1:
            raise ValueError("n_singers, n_phonemes and content_dim must be positive")


def singer_tilt(singer_id: int, n_singers: int) -> float:
    """Harmonic amplitude decay rate of a singer (larger = darker timbre)."""
    return 0.15 + 0.5 * singer_id / max(1, n_singers - 1)


def render_mel(
    f0: np.ndarray,
    vuv: np.ndarray,
    loud: np.ndarray,
    tilt: float,
    n_mels: int = N_MELS,
    sample_rate: int = SAMPLE_RATE,
) -> np.ndarray:
    """
    Log-mel (frames, n_mels) of a harmonic stack.

    Harmonic h of a voiced frame is a Gaussian bump on the mel axis centered
    at mel(h * f0) with amplitude exp(-tilt * (h - 1)). Unvoiced frames get a
    fixed breath-noise shape. Everything is scaled by loudness.
    """
    nyquist = sample_rate / 2.0
    bin_mels = librosa.hz_to_mel(mel_center_frequencies(sample_rate, n_mels))
    voiced_f0 = np.where(vuv, f0, 0.0)
    lowest = np.min(voiced_f0[voiced_f0 > 0]) if np.any(voiced_f0 > 0) else nyquist
    n_harmonics = max(1, int(nyquist // lowest))

    h = np.arange(1, n_harmonics + 1, dtype=np.float64)
    harmonic_hz = voiced_f0[:, None] * h[None, :]
    present = (harmonic_hz > 0) & (harmonic_hz < nyquist)
    harmonic_mels = librosa.hz_to_mel(np.where(present, harmonic_hz, 1.0))
    amps = np.exp(-tilt * (h - 1.0))[None, :] * present

    dist = (bin_mels[None, None, :] - harmonic_mels[:, :, None]) / HARMONIC_WIDTH
    energy = np.sum(amps[:, :, None] * np.exp(-0.5 * dist * dist), axis=1)

    breath = 0.05 * (0.2 + np.arange(n_mels) / n_mels)
    energy = np.where(vuv[:, None], energy, breath[None, :])
    return np.log(loud[:, None] * energy + MEL_FLOOR)


def _pitch_contour(rng: Rng, frames: int, hop: int, sample_rate: int) -> np.ndarray:
    seconds = np.arange(frames) * hop / sample_rate
    base = rng.uniform(150.0, 400.0)
    glide = rng.uniform(-3.0, 3.0)
    rate = rng.uniform(4.0, 7.0)
    depth = rng.uniform(0.005, 0.02)
    phase = rng.uniform(0.0, 2 * np.pi)
    progress = np.arange(frames) / max(1, frames - 1)
    return base * 2.0 ** (glide * progress / 12.0) * (1.0 + depth * np.sin(2 * np.pi * rate * seconds + phase))


def _voicing(rng: Rng, frames: int) -> np.ndarray:
    vuv = np.ones(frames, dtype=bool)
    for _ in range(int(rng.integers(0, 3))):
        length = int(rng.integers(2, max(3, frames // 8)))
        start = int(rng.integers(0, max(1, frames - length)))
        vuv[start:start + length] = False
    return vuv


def _loudness_contour(rng: Rng, frames: int) -> np.ndarray:
    period = rng.uniform(20.0, 60.0)
    phase = rng.uniform(0.0, 2 * np.pi)
    level = rng.uniform(0.02, 0.08)
    swell = 0.5 * (1.0 + np.sin(2 * np.pi * np.arange(frames) / period + phase))
    return level * (0.5 + swell)


def _content(rng: Rng, codebook: np.ndarray, frames: int) -> np.ndarray:
    ids = np.empty(frames, dtype=np.int64)
    pos = 0
    while pos < frames:
        length = int(rng.integers(3, 13))
        ids[pos:pos + length] = int(rng.integers(0, codebook.shape[0]))
        pos += length
    return codebook[ids] + 0.05 * rng.normal((frames, codebook.shape[1]))


def synth_item(rng: Rng, spec: SynthSpec, codebook: np.ndarray, index: int) -> DatasetItem:
    frames = int(rng.integers(spec.frames_min, spec.frames_max + 1))
    singer_id = int(rng.integers(0, spec.n_singers))
    vuv = _voicing(rng, frames)
    f0 = np.where(vuv, _pitch_contour(rng, frames, spec.hop, spec.sample_rate), 0.0)
    loud = _loudness_contour(rng, frames)
    content = _content(rng, codebook, frames)
    values = render_mel(f0, vuv, loud, singer_tilt(singer_id, spec.n_singers), spec.n_mels, spec.sample_rate)
    return DatasetItem(
        item_id=f"item{index:05d}",
        mel=MelSpec(values=values, hop=spec.hop, sample_rate=spec.sample_rate),
        features=FeatureSet(content=content, f0=f0, vuv=vuv, loudness=loud),
        singer_id=singer_id,
    )


def synth_dataset(rng: Rng, spec: SynthSpec) -> List[DatasetItem]:
    """
    Generate ``spec.n_items`` items. Deterministic in the rng seed; each item
    draws from its own child stream.
    """
    streams = rng.spawn(spec.n_items + 1)
    codebook = streams[0].normal((spec.n_phonemes, spec.content_dim))
    items = [synth_item(streams[i + 1], spec, codebook, i) for i in range(spec.n_items)]
    logger.info(f"Generated {len(items)} synthetic items ({spec.n_singers} singers)")
    return items
