"""
Training and sampling visualizations.

Loss curves from ``history.jsonl`` files and side-by-side reference /
generated mel images. matplotlib is optional; without it the evaluation
stage writes JSON only.
"""

import json
import logging
import pathlib
from typing import Dict, List, Optional, Sequence

import numpy as np

try:
    import matplotlib
    matplotlib.use("Agg")  # Use non-interactive backend
    import matplotlib.pyplot as plt
    HAS_MATPLOTLIB = True
except ImportError:
    HAS_MATPLOTLIB = False

logger = logging.getLogger(__name__)


def read_history(path: pathlib.Path) -> List[Dict]:
    """Read a JSONL history file, skipping blank and malformed lines."""
    if not path.exists():
        raise FileNotFoundError(f"History file not found: {path}")
    records = []
    with path.open(encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                logger.warning(f"Skipping invalid JSON line in {path.name}: {e}")
    return records


class TrainingVisualizer:
    """
    Creates figures for training runs and sampled mels.

    Usage:
        viz = TrainingVisualizer(out_dir)
        viz.plot_loss_curves({"teacher": teacher_hist, "distill": distill_hist})
        viz.plot_mel_comparison("item00000", ref_mel, gen_mel)
    """

    def __init__(self, output_dir: pathlib.Path):
        if not HAS_MATPLOTLIB:
            raise ImportError("matplotlib is required for visualizations. Install with: pip install matplotlib")
        self.output_dir = output_dir
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def plot_loss_curves(self, histories: Dict[str, pathlib.Path]) -> Optional[pathlib.Path]:
        """
        One panel per history file: loss against step on a log scale.

        Returns:
            Path to saved figure, or None when no history has records
        """
        series = {}
        for name, path in histories.items():
            if not path.exists():
                continue
            records = [r for r in read_history(path) if r.get("loss") is not None]
            if records:
                series[name] = ([r["step"] for r in records], [r["loss"] for r in records])
        if not series:
            logger.warning("No training history available for loss curves")
            return None

        fig, axes = plt.subplots(1, len(series), figsize=(6 * len(series), 4), squeeze=False)
        for ax, (name, (steps, losses)) in zip(axes[0], series.items()):
            ax.plot(steps, losses, color="steelblue", linewidth=1.5)
            ax.set_yscale("log")
            ax.set_xlabel("Step", fontsize=12)
            ax.set_ylabel("Loss", fontsize=12)
            ax.set_title(f"{name} loss", fontsize=14, fontweight="bold")
            ax.grid(True, alpha=0.3)

        plt.tight_layout()
        output_path = self.output_dir / "loss_curves.png"
        plt.savefig(output_path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        logger.info(f"Saved loss curves: {output_path}")
        return output_path

    def plot_mel_comparison(self, name: str, reference: np.ndarray, generated: np.ndarray) -> pathlib.Path:
        """Reference and generated (frames, n_mels) log-mels on a shared color scale."""
        vmin = float(min(reference.min(), generated.min()))
        vmax = float(max(reference.max(), generated.max()))
        fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(10, 6), sharex=True)
        for ax, mel, title in ((ax1, reference, "Reference"), (ax2, generated, "Generated")):
            image = ax.imshow(mel.T, origin="lower", aspect="auto", vmin=vmin, vmax=vmax, cmap="magma")
            ax.set_ylabel("Mel bin", fontsize=11)
            ax.set_title(f"{title}: {name}", fontsize=12, fontweight="bold")
        ax2.set_xlabel("Frame", fontsize=11)
        fig.colorbar(image, ax=[ax1, ax2], label="log energy")

        output_path = self.output_dir / f"mel_{name}.png"
        plt.savefig(output_path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        return output_path

    def generate_all(
        self,
        histories: Dict[str, pathlib.Path],
        comparisons: Sequence[tuple] = (),
    ) -> List[pathlib.Path]:
        """
        Generate loss curves and mel comparisons; failures are logged and skipped.

        Args:
            histories: Name -> history.jsonl path
            comparisons: (name, reference, generated) triples

        Returns:
            List of paths to saved figures
        """
        outputs = []
        try:
            outputs.append(self.plot_loss_curves(histories))
        except Exception as e:
            logger.warning(f"Error generating loss curves: {e}")

        for name, reference, generated in comparisons:
            try:
                outputs.append(self.plot_mel_comparison(name, reference, generated))
            except Exception as e:
                logger.warning(f"Error generating mel comparison for {name}: {e}")

        outputs = [o for o in outputs if o is not None]
        logger.info(f"Generated {len(outputs)} visualization(s)")
        return outputs
