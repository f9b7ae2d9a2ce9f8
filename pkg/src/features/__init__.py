"""Mel targets, pitch/loudness/content features and the conditioning encoder."""

from src.features.audio import MelSpec, Wave, estimate_f0, load_wav, loudness, mel_spectrogram
from src.features.conditioning import CondConfig, CondEncoder, SingerTable, build_cond
from src.features.content import DatasetItem, FeatureSet, extract_features, load_content_features
from src.features.synthetic import SynthSpec, synth_dataset

__all__ = [
    "CondConfig",
    "CondEncoder",
    "DatasetItem",
    "FeatureSet",
    "MelSpec",
    "SingerTable",
    "SynthSpec",
    "Wave",
    "build_cond",
    "estimate_f0",
    "extract_features",
    "load_content_features",
    "load_wav",
    "loudness",
    "mel_spectrogram",
    "synth_dataset",
]
