"""
Sampling speed benchmark and step-count study.

The benchmark times teacher ODE sampling against one-step student sampling
with the same network shape, conditioning, precision and thread, and
reports the median wall time over repeats, the NFE and the speedup.
"""

import logging
import statistics
import time
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from src.diffusion.sampler import sample_student, sample_teacher
from src.diffusion.schedule import TimeGrid
from src.errors import ConfigMismatchError, NonFiniteError
from src.evaluation.metrics import mse, rtf
from src.features.audio import HOP_LENGTH, SAMPLE_RATE
from src.models.denoiser import NetworkDenoiser
from src.numcore.rng import Rng
from src.numcore.tensor import Tensor
from src.records import format_record

logger = logging.getLogger(__name__)


@dataclass
class BenchRow:
    """One benchmarked method."""

    method: str
    nfe: int
    wall_s: float
    rtf: float
    speedup: float = 1.0
    threads: int = 1


def _time_sampler(run: Callable[[Rng], np.ndarray], denoiser, seed: int, repeats: int) -> tuple:
    walls, nfes = [], []
    for _ in range(repeats):
        denoiser.reset_nfe()
        started = time.perf_counter()
        out = run(Rng(seed))
        walls.append(time.perf_counter() - started)
        nfes.append(denoiser.nfe)
        if not np.all(np.isfinite(out)):
            raise NonFiniteError("benchmark sample is not finite")
    if len(set(nfes)) != 1:
        raise RuntimeError(f"NFE varied across repeats: {nfes}")
    return statistics.median(walls), nfes[0]


def run_benchmark(
    teacher: NetworkDenoiser,
    student: NetworkDenoiser,
    cond: Optional[Tensor],
    grid: TimeGrid,
    repeats: int = 5,
    seed: int = 0,
    solver: str = "euler",
    frames: Optional[int] = None,
    hop: int = HOP_LENGTH,
    sample_rate: int = SAMPLE_RATE,
    threads: int = 1,
) -> List[BenchRow]:
    """
    Time ``sample_teacher`` (N steps) against ``sample_student`` (1 step).

    Args:
        teacher: Teacher denoiser
        student: Student denoiser (normally the EMA parameters)
        cond: Shared conditioning, or None with ``frames`` set
        grid: Noise-level grid; its N is the teacher step count
        repeats: Timed repetitions per method (median reported)
        seed: Noise seed, identical for every repetition
        threads: BLAS/OpenMP threads for both timed sections

    Returns:
        Rows for "teacher" and "student"; speedup is relative to the teacher

    Raises:
        ConfigMismatchError: If the two networks differ in shape
    """
    if teacher.config != student.config:
        raise ConfigMismatchError(
            f"benchmark needs the same network for teacher and student: "
            f"{teacher.config.to_dict()} vs {student.config.to_dict()}"
        )
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    if cond is not None:
        shape = teacher.output_shape(cond)
    elif frames is not None:
        shape = (teacher.config.mel_bins, frames)
    else:
        raise ValueError("either cond or frames is required")
    n_frames = shape[-1]

    with threadpool_limits(limits=threads):
        teacher_wall, teacher_nfe = _time_sampler(
            lambda rng: sample_teacher(teacher, cond, grid, rng, solver=solver, shape=shape), teacher, seed, repeats
        )
        student_wall, student_nfe = _time_sampler(
            lambda rng: sample_student(student, cond, 1, grid, rng, shape=shape), student, seed, repeats
        )

    rows = [
        BenchRow("teacher", teacher_nfe, teacher_wall, rtf(teacher_wall, n_frames, hop, sample_rate), 1.0, threads),
        BenchRow(
            "student",
            student_nfe,
            student_wall,
            rtf(student_wall, n_frames, hop, sample_rate),
            teacher_wall / student_wall if student_wall > 0 else float("inf"),
            threads,
        ),
    ]
    for row in rows:
        logger.info(format_record("bench", **asdict(row), repeats=repeats))
    return rows


@dataclass
class StudyRow:
    """Reconstruction quality at one student step count."""

    steps: int
    nfe: int
    mse: float
    wall_s: float


def run_step_study(
    student: NetworkDenoiser,
    conds: Sequence[Optional[Tensor]],
    targets: Sequence[np.ndarray],
    grid: TimeGrid,
    steps_list: Sequence[int] = (1, 2, 4),
    seed: int = 0,
    postprocess: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    threads: int = 1,
) -> Dict:
    """
    Sample every conditioning with each step count and compare to targets.

    ``targets`` are (mel_bins, frames) arrays in the domain produced by
    ``postprocess`` (identity by default). Non-finite samples are errors;
    the spread across step counts is reported, not enforced.

    Returns:
        ``{"rows": [...], "relative_spread": (max - min) / min of the MSEs}``
    """
    if len(conds) != len(targets):
        raise ValueError(f"{len(conds)} conditionings but {len(targets)} targets")
    rows: List[StudyRow] = []
    for steps in steps_list:
        student.reset_nfe()
        errors = []
        started = time.perf_counter()
        with threadpool_limits(limits=threads):
            for i, (cond, target) in enumerate(zip(conds, targets)):
                sample = sample_student(student, cond, steps, grid, Rng(seed + i), shape=np.shape(target))
                if postprocess is not None:
                    sample = postprocess(sample)
                errors.append(mse(target, sample))
        wall = time.perf_counter() - started
        row = StudyRow(steps=steps, nfe=student.nfe // max(1, len(conds)), mse=float(np.mean(errors)), wall_s=wall)
        if not np.isfinite(row.mse):
            raise NonFiniteError(f"step study produced a non-finite MSE at steps={steps}")
        rows.append(row)
        logger.info(format_record("step_study", **asdict(row)))

    values = [r.mse for r in rows]
    spread = (max(values) - min(values)) / min(values) if min(values) > 0 else 0.0
    return {"rows": [asdict(r) for r in rows], "relative_spread": spread}
