"""
Objective metrics for decoded mels.

- ``mse``: mean squared error between reference and generated log-mels
- ``fpc``: Pearson correlation of F0 over frames voiced in both contours
- ``rtf``: decode wall time divided by the audio duration the mel spans

Generated mels are not vocoded, so their F0 is read off the mel itself with
``mel_peak_f0`` (the lowest strong spectral peak per frame).
"""

import logging
import math
import statistics
import warnings
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence

import librosa
import numpy as np
from scipy import stats

from src.errors import ShapeError
from src.features.audio import HOP_LENGTH, SAMPLE_RATE, mel_center_frequencies

logger = logging.getLogger(__name__)

PEAK_RATIO = 0.5
VOICED_CONTRAST = 4.0


def mse(reference: np.ndarray, generated: np.ndarray) -> float:
    """
    Mean squared error over all elements.

    Raises:
        ShapeError: If the shapes differ
    """
    reference = np.asarray(reference, dtype=np.float64)
    generated = np.asarray(generated, dtype=np.float64)
    if reference.shape != generated.shape:
        raise ShapeError(f"mse needs equal shapes, got {list(reference.shape)} and {list(generated.shape)}")
    return float(np.mean((reference - generated) ** 2))


def fpc(
    f0_ref: np.ndarray,
    f0_gen: np.ndarray,
    vuv_ref: Optional[np.ndarray] = None,
    vuv_gen: Optional[np.ndarray] = None,
) -> float:
    """
    F0 Pearson correlation over frames voiced in both contours.

    Voicing defaults to ``f0 > 0``. Returns NaN (with a warning) when fewer
    than two frames are voiced in both or either contour is constant there.

    Raises:
        ShapeError: If the contours differ in length
    """
    f0_ref = np.asarray(f0_ref, dtype=np.float64).reshape(-1)
    f0_gen = np.asarray(f0_gen, dtype=np.float64).reshape(-1)
    if f0_ref.shape != f0_gen.shape:
        raise ShapeError(f"F0 contours differ in length: {f0_ref.size} vs {f0_gen.size}")
    vuv_ref = f0_ref > 0 if vuv_ref is None else np.asarray(vuv_ref, dtype=bool).reshape(-1)
    vuv_gen = f0_gen > 0 if vuv_gen is None else np.asarray(vuv_gen, dtype=bool).reshape(-1)
    voiced = vuv_ref & vuv_gen
    if voiced.sum() < 2:
        logger.warning(f"FPC undefined: only {int(voiced.sum())} frames voiced in both contours")
        return math.nan
    a, b = f0_ref[voiced], f0_gen[voiced]
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        logger.warning("FPC undefined: F0 is constant over the voiced frames")
        return math.nan
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", stats.ConstantInputWarning)
        r = stats.pearsonr(a, b)[0]
    return float(np.clip(r, -1.0, 1.0))


def rtf(wall_s: float, frames: int, hop: int = HOP_LENGTH, sample_rate: int = SAMPLE_RATE) -> float:
    """Real-time factor: wall time / (frames * hop / sample_rate)."""
    if frames <= 0:
        raise ValueError(f"frames must be positive, got {frames}")
    if wall_s < 0:
        raise ValueError(f"wall time must be >= 0, got {wall_s}")
    return float(wall_s / (frames * hop / sample_rate))


def mel_peak_f0(
    mel: np.ndarray,
    sample_rate: int = SAMPLE_RATE,
    f_min: float = 50.0,
    f_max: float = 1100.0,
) -> np.ndarray:
    """
    Per-frame F0 read from a (frames, n_mels) log-mel.

    The lowest bin within [f_min, f_max] whose energy reaches PEAK_RATIO of
    the frame's in-range maximum is taken as the fundamental, refined by a
    parabola on the log energies in the mel domain. Frames whose in-range
    maximum is less than VOICED_CONTRAST times the in-range minimum have no
    harmonic structure and are unvoiced (0).
    """
    mel = np.asarray(mel, dtype=np.float64)
    if mel.ndim != 2:
        raise ShapeError(f"mel must be (frames, n_mels), got shape {list(mel.shape)}")
    n_mels = mel.shape[1]
    centers = mel_center_frequencies(sample_rate, n_mels)
    center_mels = librosa.hz_to_mel(centers)
    in_range = np.flatnonzero((centers >= f_min) & (centers <= f_max))
    f0 = np.zeros(mel.shape[0])
    if in_range.size == 0:
        return f0

    energy = np.exp(mel)
    for frame, row in enumerate(energy):
        band = row[in_range]
        best = band.max()
        if best < VOICED_CONTRAST * band.min():
            continue
        k = int(in_range[np.argmax(band >= PEAK_RATIO * best)])
        while k + 1 < n_mels and row[k + 1] > row[k]:
            k += 1
        position = center_mels[k]
        if 0 < k < n_mels - 1:
            y0, y1, y2 = mel[frame, k - 1], mel[frame, k], mel[frame, k + 1]
            denom = y0 - 2.0 * y1 + y2
            if denom < 0:
                shift = float(np.clip(0.5 * (y0 - y2) / denom, -0.5, 0.5))
                step = center_mels[k + 1] - center_mels[k] if shift > 0 else center_mels[k] - center_mels[k - 1]
                position = center_mels[k] + shift * step
        f0[frame] = float(librosa.mel_to_hz(position))
    return f0


@dataclass
class ItemMetrics:
    """Metrics of one reference/generated pair."""

    item_id: str
    mse: float
    fpc: float
    rtf: Optional[float] = None


def evaluate_items(
    item_ids: Sequence[str],
    references: Sequence[np.ndarray],
    generated: Sequence[np.ndarray],
    f0_refs: Sequence[np.ndarray],
    f0_gens: Sequence[np.ndarray],
    wall_times: Optional[Sequence[float]] = None,
    hop: int = HOP_LENGTH,
    sample_rate: int = SAMPLE_RATE,
) -> Dict:
    """
    Per-item and mean metrics.

    Returns:
        ``{"items": [...], "mean": {"mse", "fpc", "rtf"}, "count": n}``; the
        FPC mean skips undefined (NaN) items.

    Raises:
        ShapeError: If the sequences differ in length
    """
    n = len(item_ids)
    lengths = [len(references), len(generated), len(f0_refs), len(f0_gens)]
    if wall_times is not None:
        lengths.append(len(wall_times))
    if any(length != n for length in lengths):
        raise ShapeError(f"item counts differ: ids={n}, others={lengths}")

    rows: List[ItemMetrics] = []
    for i in range(n):
        frames = np.asarray(references[i]).shape[0]
        rows.append(
            ItemMetrics(
                item_id=item_ids[i],
                mse=mse(references[i], generated[i]),
                fpc=fpc(f0_refs[i], f0_gens[i]),
                rtf=rtf(wall_times[i], frames, hop, sample_rate) if wall_times is not None else None,
            )
        )

    def _mean(values: List[Optional[float]]) -> Optional[float]:
        finite = [v for v in values if v is not None and not math.isnan(v)]
        return statistics.fmean(finite) if finite else None

    return {
        "count": n,
        "items": [asdict(row) for row in rows],
        "mean": {
            "mse": _mean([r.mse for r in rows]),
            "fpc": _mean([r.fpc for r in rows]),
            "rtf": _mean([r.rtf for r in rows]),
        },
    }
