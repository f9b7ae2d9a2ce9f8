"""
Dataset statistics.

Summarizes a generated or extracted dataset: item and frame counts, singer
coverage, voicing and F0 ranges, and the log-mel statistics used for
normalization and for the automatic sigma_data choice.
"""

import json
import pathlib
import statistics
from collections import Counter
from datetime import datetime
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.features.content import DatasetItem
from src.training.batching import MelNormalizer


def compute_percentiles(values: Sequence[float]) -> Dict:
    """Min/percentiles/max/mean/stdev of a list of values."""
    if len(values) == 0:
        return {}
    sorted_vals = sorted(float(v) for v in values)
    n = len(sorted_vals)
    return {
        "min": sorted_vals[0],
        "p25": sorted_vals[n // 4],
        "p50": sorted_vals[n // 2],
        "p75": sorted_vals[3 * n // 4],
        "p95": sorted_vals[95 * n // 100] if n > 20 else sorted_vals[-1],
        "max": sorted_vals[-1],
        "mean": round(statistics.fmean(sorted_vals), 4),
        "stdev": round(statistics.stdev(sorted_vals), 4) if n > 1 else 0,
    }


def estimate_sigma_data(items: Sequence[DatasetItem], normalizer: Optional[MelNormalizer] = None) -> float:
    """Standard deviation of the (normalized) training mels."""
    normalizer = normalizer or MelNormalizer()
    values = np.concatenate([normalizer.normalize(item.mel.values).reshape(-1) for item in items])
    std = float(values.std())
    if not np.isfinite(std) or std <= 0:
        raise ValueError(f"cannot estimate sigma_data from degenerate mels (std={std})")
    return std


class DatasetStatistics:
    """
    Dataset statistics calculator.

    Usage:
        stats = DatasetStatistics(items, source="data/synthetic")
        stats.compute_all()
        stats.save_json(out / "dataset_stats.json")
    """

    def __init__(self, items: Sequence[DatasetItem], source: str = ""):
        """
        Args:
            items: Loaded dataset items
            source: Where the items came from (recorded in the metadata)
        """
        self.items = list(items)
        self.source = source
        self.stats: Dict = {}

    def compute_all(self) -> Dict:
        """
        Compute all statistics.

        Returns:
            Dictionary containing all computed statistics
        """
        if not self.items:
            raise ValueError("dataset is empty")
        self.stats = {
            "metadata": {
                "computed_at": datetime.now().isoformat(),
                "source": self.source,
                "total_items": len(self.items),
            },
            "basic": self.compute_basic_stats(),
            "pitch": self.compute_pitch_stats(),
            "mel": self.compute_mel_stats(),
        }
        return self.stats

    def compute_basic_stats(self) -> Dict:
        """Counts, durations and singer coverage."""
        frames = [item.mel.frames for item in self.items]
        singers = Counter(int(item.singer_id) for item in self.items)
        return {
            "total_items": len(self.items),
            "total_frames": int(sum(frames)),
            "total_seconds": round(sum(item.mel.duration for item in self.items), 3),
            "frames": compute_percentiles(frames),
            "singer_distribution": {str(k): v for k, v in sorted(singers.items())},
            "content_dim": self.items[0].features.content_dim,
            "n_mels": self.items[0].mel.n_mels,
        }

    def compute_pitch_stats(self) -> Dict:
        """Voicing ratio and F0 distribution over voiced frames."""
        voiced_f0: List[float] = []
        voiced_ratios = []
        for item in self.items:
            vuv = item.features.vuv
            voiced_ratios.append(float(np.mean(vuv)))
            voiced_f0.extend(item.features.f0[vuv].tolist())
        return {
            "voiced_ratio": compute_percentiles(voiced_ratios),
            "f0_hz": compute_percentiles(voiced_f0),
        }

    def compute_mel_stats(self) -> Dict:
        """Global log-mel statistics and the sigma_data they imply."""
        normalizer = MelNormalizer.fit(self.items)
        values = np.concatenate([item.mel.values.reshape(-1) for item in self.items])
        return {
            **normalizer.to_dict(),
            "min": float(values.min()),
            "max": float(values.max()),
            "sigma_data_normalized": estimate_sigma_data(self.items, normalizer),
            "sigma_data_raw": estimate_sigma_data(self.items),
        }

    def save_json(self, output_path: pathlib.Path) -> None:
        """Save statistics as JSON file."""
        output_path.parent.mkdir(parents=True, exist_ok=True)
        with output_path.open("w", encoding="utf-8") as f:
            json.dump(self.stats, f, indent=2, ensure_ascii=False)

    def save_text_report(self, output_path: pathlib.Path) -> None:
        """Save statistics as human-readable text report."""
        output_path.parent.mkdir(parents=True, exist_ok=True)

        lines = []
        lines.append("=" * 80)
        lines.append("DATASET STATISTICS REPORT")
        lines.append("=" * 80)
        lines.append(f"Generated: {self.stats['metadata']['computed_at']}")
        lines.append(f"Source: {self.stats['metadata']['source']}")
        lines.append(f"Total items: {self.stats['metadata']['total_items']}")
        lines.append("")

        lines.append("BASIC STATISTICS")
        lines.append("-" * 80)
        basic = self.stats["basic"]
        fr = basic["frames"]
        lines.append(f"Total frames: {basic['total_frames']:,} ({basic['total_seconds']} s)")
        lines.append(f"Frames per item: Min: {fr['min']}, Max: {fr['max']}, Mean: {fr['mean']}")
        lines.append("Singer distribution:")
        for singer, count in basic["singer_distribution"].items():
            lines.append(f"  singer {singer}: {count}")
        lines.append("")

        lines.append("PITCH STATISTICS")
        lines.append("-" * 80)
        pitch = self.stats["pitch"]
        if pitch["f0_hz"]:
            f0 = pitch["f0_hz"]
            lines.append(f"F0 (Hz): Min: {f0['min']:.1f}, P50: {f0['p50']:.1f}, Max: {f0['max']:.1f}")
        lines.append(f"Mean voiced ratio: {pitch['voiced_ratio']['mean']}")
        lines.append("")

        lines.append("MEL STATISTICS")
        lines.append("-" * 80)
        mel = self.stats["mel"]
        lines.append(f"Mean: {mel['mel_mean']:.4f}, Std: {mel['mel_std']:.4f}")
        lines.append(f"Range: [{mel['min']:.3f}, {mel['max']:.3f}]")
        lines.append(f"sigma_data (normalized): {mel['sigma_data_normalized']:.4f}")
        lines.append("")

        with output_path.open("w", encoding="utf-8") as f:
            f.write("\n".join(lines))
