"""
Signal-level features: log-mel targets, loudness and F0.

All three share one framing rule: centered frames every ``hop`` samples,
giving ``1 + len(samples) // hop`` frames.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import librosa
import numpy as np
import soundfile as sf
from numpy.lib.stride_tricks import sliding_window_view

from src.errors import FormatError

logger = logging.getLogger(__name__)

SAMPLE_RATE = 24000
N_FFT = 512
WIN_LENGTH = 512
HOP_LENGTH = 128
N_MELS = 80
LOG_FLOOR = 1e-5
F0_MIN = 50.0
F0_MAX = 1100.0
F0_FRAME_LENGTH = 1024
VOICING_THRESHOLD = 0.5


@dataclass
class Wave:
    """Mono waveform in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise FormatError(f"expected mono samples, got shape {list(self.samples.shape)}")
        if self.samples.size == 0:
            raise FormatError("empty signal")
        if self.sample_rate <= 0:
            raise FormatError(f"sample rate must be positive, got {self.sample_rate}")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class MelSpec:
    """Log-mel matrix of shape (frames, n_mels)."""

    values: np.ndarray
    hop: int = HOP_LENGTH
    n_fft: int = N_FFT
    win: int = WIN_LENGTH
    sample_rate: int = SAMPLE_RATE

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_mels(self) -> int:
        return self.values.shape[1]

    @property
    def duration(self) -> float:
        """Audio duration implied by the frame count."""
        return self.frames * self.hop / self.sample_rate


def frame_count(n_samples: int, hop: int = HOP_LENGTH) -> int:
    return 1 + n_samples // hop


def load_wav(path: Union[str, Path]) -> Wave:
    """
    Read a PCM 16-bit mono 24 kHz WAV file.

    Raises:
        FormatError: For any other subtype, channel count or sample rate
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"WAV file not found: {path}")
    info = sf.info(str(path))
    if info.subtype != "PCM_16":
        raise FormatError(f"{path.name}: expected PCM_16 samples, got {info.subtype}")
    if info.channels != 1:
        raise FormatError(f"{path.name}: expected mono audio, got {info.channels} channels")
    if info.samplerate != SAMPLE_RATE:
        raise FormatError(f"{path.name}: expected {SAMPLE_RATE} Hz, got {info.samplerate} Hz (resampling not supported)")
    samples, sr = sf.read(str(path), dtype="float64")
    return Wave(samples=samples, sample_rate=sr)


def write_wav(path: Union[str, Path], wave: Wave) -> None:
    """Write ``wave`` as PCM 16-bit."""
    sf.write(str(path), np.clip(wave.samples, -1.0, 1.0), wave.sample_rate, subtype="PCM_16")


def mel_filterbank(
    sample_rate: int = SAMPLE_RATE,
    n_fft: int = N_FFT,
    n_mels: int = N_MELS,
    fmin: float = 0.0,
    fmax: Optional[float] = None,
) -> np.ndarray:
    """Slaney-style triangular filters, shape (n_mels, 1 + n_fft // 2)."""
    fmax = sample_rate / 2.0 if fmax is None else fmax
    return librosa.filters.mel(
        sr=sample_rate, n_fft=n_fft, n_mels=n_mels, fmin=fmin, fmax=fmax, htk=False, norm="slaney"
    )


def mel_center_frequencies(
    sample_rate: int = SAMPLE_RATE, n_mels: int = N_MELS, fmin: float = 0.0, fmax: Optional[float] = None
) -> np.ndarray:
    """Center frequency (Hz) of each mel filter."""
    fmax = sample_rate / 2.0 if fmax is None else fmax
    return librosa.mel_frequencies(n_mels=n_mels + 2, fmin=fmin, fmax=fmax, htk=False)[1:-1]


def mel_spectrogram(
    wave: Wave,
    n_fft: int = N_FFT,
    win: int = WIN_LENGTH,
    hop: int = HOP_LENGTH,
    n_mels: int = N_MELS,
    fmin: float = 0.0,
    fmax: Optional[float] = None,
    log_floor: float = LOG_FLOOR,
) -> MelSpec:
    """
    Hann-windowed STFT (zero-padded, centered) -> power -> mel filterbank
    -> natural log with floor.

    Raises:
        FormatError: If the sample rate is not 24 kHz
    """
    if wave.sample_rate != SAMPLE_RATE:
        raise FormatError(f"mel_spectrogram requires {SAMPLE_RATE} Hz input, got {wave.sample_rate} Hz")
    stft = librosa.stft(
        wave.samples,
        n_fft=n_fft,
        hop_length=hop,
        win_length=win,
        window="hann",
        center=True,
        pad_mode="constant",
    )
    power = np.abs(stft) ** 2
    mel = mel_filterbank(wave.sample_rate, n_fft, n_mels, fmin, fmax) @ power
    values = np.log(np.maximum(mel, log_floor)).T
    return MelSpec(values=values, hop=hop, n_fft=n_fft, win=win, sample_rate=wave.sample_rate)


def _centered_frames(samples: np.ndarray, frame_length: int, hop: int, mode: str) -> np.ndarray:
    """Frames of shape (n_frames, frame_length), n_frames = 1 + len // hop."""
    half = frame_length // 2
    padded = np.pad(samples, (half, half), mode=mode)
    n_frames = frame_count(samples.size, hop)
    needed = (n_frames - 1) * hop + frame_length
    if padded.size < needed:
        padded = np.pad(padded, (0, needed - padded.size))
    frames = librosa.util.frame(padded, frame_length=frame_length, hop_length=hop, axis=0)
    return frames[:n_frames]


def loudness(wave: Wave, hop: int = HOP_LENGTH, win: int = WIN_LENGTH) -> np.ndarray:
    """
    Per-frame mean of squared samples over the analysis window.

    Edges are reflect-padded so a constant signal of amplitude a gives a^2 on
    every frame.
    """
    if win < hop:
        raise ValueError(f"window ({win}) must be at least the hop ({hop})")
    frames = _centered_frames(wave.samples, win, hop, mode="reflect")
    return np.mean(frames * frames, axis=1)


def estimate_f0(
    wave: Wave,
    hop: int = HOP_LENGTH,
    f_min: float = F0_MIN,
    f_max: float = F0_MAX,
    frame_length: Optional[int] = None,
    threshold: float = VOICING_THRESHOLD,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Autocorrelation F0 estimator.

    For each frame, the normalized correlation between the frame head and the
    frame shifted by each lag in [sr / f_max, sr / f_min] is computed. The
    first local peak within 90% of the best correlation is refined by
    parabolic interpolation. Frames whose best correlation is below
    ``threshold`` are unvoiced (f0 = 0).

    Without ``frame_length`` the frame is the next power of two holding two
    periods of ``f_min``, and never shorter than 1024 samples.

    Returns:
        (f0 in Hz, voiced flags), one value per frame

    Raises:
        ValueError: If not f_min < f_max < sample_rate / 2, or an explicit
            ``frame_length`` does not exceed one period of ``f_min``
    """
    sr = wave.sample_rate
    if not 0 < f_min < f_max < sr / 2:
        raise ValueError(f"need 0 < f_min < f_max < {sr / 2}, got f_min={f_min}, f_max={f_max}")
    lag_min = max(1, int(np.floor(sr / f_max)))
    lag_max = int(np.ceil(sr / f_min))
    if frame_length is None:
        frame_length = max(F0_FRAME_LENGTH, 1 << int(np.ceil(np.log2(2 * lag_max))))
    if lag_max >= frame_length:
        raise ValueError(f"frame_length {frame_length} too short for f_min={f_min} Hz")
    span = frame_length - lag_max

    frames = _centered_frames(wave.samples, frame_length, hop, mode="constant")
    n_frames = frames.shape[0]
    head = frames[:, :span]
    head_energy = np.sum(head * head, axis=1)

    # windows[f, lag, :] = frames[f, lag:lag + span]
    windows = sliding_window_view(frames, span, axis=1)
    corr = np.empty((n_frames, lag_max - lag_min + 1))
    for j, lag in enumerate(range(lag_min, lag_max + 1)):
        seg = windows[:, lag, :]
        denom = np.sqrt(head_energy * np.sum(seg * seg, axis=1))
        with np.errstate(invalid="ignore", divide="ignore"):
            corr[:, j] = np.where(denom > 0, np.sum(head * seg, axis=1) / np.where(denom > 0, denom, 1.0), 0.0)

    f0 = np.zeros(n_frames)
    vuv = np.zeros(n_frames, dtype=bool)
    for f in range(n_frames):
        r = corr[f]
        best = r.max()
        if head_energy[f] <= 0 or best < threshold:
            continue
        peak = _first_strong_peak(r, 0.9 * best)
        offset = 0.0
        if 0 < peak < r.size - 1:
            denom = r[peak - 1] - 2.0 * r[peak] + r[peak + 1]
            if denom < 0:
                offset = 0.5 * (r[peak - 1] - r[peak + 1]) / denom
        f0[f] = sr / (lag_min + peak + offset)
        vuv[f] = True
    return f0, vuv


def _first_strong_peak(r: np.ndarray, floor: float) -> int:
    """Index of the first local maximum with r >= floor."""
    n = r.size
    for i in range(n):
        if r[i] < floor:
            continue
        left_ok = i == 0 or r[i] >= r[i - 1]
        right_ok = i == n - 1 or r[i] >= r[i + 1]
        if left_ok and right_ok:
            return i
    return int(np.argmax(r))
