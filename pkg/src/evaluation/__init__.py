"""Metrics, benchmarks, dataset statistics and visualizations."""

from src.evaluation.benchmark import BenchRow, StudyRow, run_benchmark, run_step_study
from src.evaluation.dataset_stats import DatasetStatistics, estimate_sigma_data
from src.evaluation.metrics import evaluate_items, fpc, mel_peak_f0, mse, rtf

try:
    from src.evaluation.visualizations import HAS_MATPLOTLIB, TrainingVisualizer
except ImportError:
    HAS_MATPLOTLIB = False
    TrainingVisualizer = None

__all__ = [
    "BenchRow",
    "DatasetStatistics",
    "HAS_MATPLOTLIB",
    "StudyRow",
    "TrainingVisualizer",
    "estimate_sigma_data",
    "evaluate_items",
    "fpc",
    "mel_peak_f0",
    "mse",
    "rtf",
    "run_benchmark",
    "run_step_study",
]
