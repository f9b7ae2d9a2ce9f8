#!/usr/bin/env python3
"""
Command-line entry point.

Usage:
    python -m src.pipeline.run [--config PATH] [--seed N] [--precision f32|f64] [--out DIR] COMMAND ...

Examples:
    # Generate data, train, distill, sample and evaluate with the default config
    python -m src.pipeline.run gen-data
    python -m src.pipeline.run train-teacher
    python -m src.pipeline.run distill
    python -m src.pipeline.run sample --steps 1
    python -m src.pipeline.run eval

    # Convert item00003 to singer 2 with two student steps
    python -m src.pipeline.run sample --items item00003 --singer 2 --steps 2

    # Speed benchmark plus step-count study
    python -m src.pipeline.run --precision f32 bench --study
"""

import argparse
import json
import logging
import pathlib
import sys

# Add project root to path
ROOT = pathlib.Path(__file__).resolve().parents[2]
sys.path.insert(0, str(ROOT))

from src.errors import error_code
from src.pipeline.orchestrator import PipelineOrchestrator

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Mel decoder pipeline: teacher training, consistency distillation, sampling and benchmarks",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python -m src.pipeline.run --seed 1 gen-data
  python -m src.pipeline.run train-teacher --steps 200
  python -m src.pipeline.run train-teacher --resume runs/teacher.comc --steps 200
  python -m src.pipeline.run distill --teacher runs/teacher.comc
  python -m src.pipeline.run sample --ckpt runs/student.comc --steps 1
  python -m src.pipeline.run bench --repeats 3
        """,
    )
    parser.add_argument("--config", type=pathlib.Path, default=None,
                        help="Path to config file (default: configs/default.yaml)")
    parser.add_argument("--seed", type=int, default=None, help="Override runtime.seed")
    parser.add_argument("--precision", choices=["f32", "f64"], default=None, help="Override runtime.precision")
    parser.add_argument("--out", type=pathlib.Path, default=None,
                        help="Root directory for relative artifact paths (default: current directory)")

    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="Generate the synthetic dataset")
    gen.add_argument("--data", type=pathlib.Path, default=None, help="Dataset directory")

    train = sub.add_parser("train-teacher", help="Train the teacher denoiser")
    train.add_argument("--data", type=pathlib.Path, default=None, help="Dataset directory")
    train.add_argument("--ckpt", type=pathlib.Path, default=None, help="Output checkpoint")
    train.add_argument("--steps", type=int, default=None, help="Training steps (default: training.teacher_steps)")
    train.add_argument("--resume", type=pathlib.Path, default=None, help="Teacher checkpoint to continue from")

    distill = sub.add_parser("distill", help="Distill the student from a teacher checkpoint")
    distill.add_argument("--teacher", type=pathlib.Path, default=None, help="Teacher checkpoint")
    distill.add_argument("--data", type=pathlib.Path, default=None, help="Dataset directory")
    distill.add_argument("--ckpt", type=pathlib.Path, default=None, help="Output student checkpoint")
    distill.add_argument("--steps", type=int, default=None, help="Distillation steps (default: training.distill_steps)")

    sample = sub.add_parser("sample", help="Decode mels for dataset items")
    sample.add_argument("--ckpt", type=pathlib.Path, default=None, help="Teacher or student checkpoint")
    sample.add_argument("--data", type=pathlib.Path, default=None, help="Dataset directory")
    sample.add_argument("--items", type=str, default=None, help="Comma-separated item ids (default: all)")
    sample.add_argument("--singer", type=int, default=None, help="Target singer id (default: each item's own)")
    sample.add_argument("--steps", type=int, default=None,
                        help="Student consistency steps, or teacher ODE steps N")
    sample.add_argument("--solver", choices=["euler", "heun"], default=None, help="Teacher ODE solver")
    sample.add_argument("--theta", action="store_true", help="Sample the student with theta instead of the EMA theta-")
    sample.add_argument("--samples", type=pathlib.Path, default=None, help="Output directory")

    evaluate = sub.add_parser("eval", help="Score sampled mels against references")
    evaluate.add_argument("--samples", type=pathlib.Path, default=None, help="Directory with samples.jsonl")
    evaluate.add_argument("--data", type=pathlib.Path, default=None, help="Dataset directory")
    evaluate.add_argument("--report", type=pathlib.Path, default=None, help="Output JSON report")

    bench = sub.add_parser("bench", help="Benchmark teacher vs student sampling")
    bench.add_argument("--teacher", type=pathlib.Path, default=None, help="Teacher checkpoint")
    bench.add_argument("--student", type=pathlib.Path, default=None, help="Student checkpoint")
    bench.add_argument("--repeats", type=int, default=None, help="Timed repetitions (default: benchmark.repeats)")
    bench.add_argument("--study", action="store_true", help="Also run the step-count study")
    bench.add_argument("--data", type=pathlib.Path, default=None, help="Dataset directory for the study")
    bench.add_argument("--report", type=pathlib.Path, default=None, help="Output JSON report")

    return parser


def dispatch(orchestrator: PipelineOrchestrator, args: argparse.Namespace):
    """Map parsed arguments onto an orchestrator command."""
    if args.command == "gen-data":
        return orchestrator.run("gen_data", out_dir=args.data)
    if args.command == "train-teacher":
        return orchestrator.run("train_teacher", data_dir=args.data, out=args.ckpt, steps=args.steps, resume=args.resume)
    if args.command == "distill":
        return orchestrator.run("distill", teacher_ckpt=args.teacher, data_dir=args.data, out=args.ckpt, steps=args.steps)
    if args.command == "sample":
        items = [s.strip() for s in args.items.split(",") if s.strip()] if args.items else None
        return orchestrator.run(
            "sample",
            ckpt_path=args.ckpt,
            data_dir=args.data,
            item_ids=items,
            singer_id=args.singer,
            steps=args.steps,
            out_dir=args.samples,
            use_ema=False if args.theta else None,
            solver=args.solver,
        )
    if args.command == "eval":
        return orchestrator.run("evaluate", samples_dir=args.samples, data_dir=args.data, out=args.report)
    if args.command == "bench":
        return orchestrator.run(
            "bench",
            teacher_ckpt=args.teacher,
            student_ckpt=args.student,
            repeats=args.repeats,
            study=args.study,
            data_dir=args.data,
            out=args.report,
        )
    raise ValueError(f"Unknown command: {args.command}")


def format_error(exc: BaseException) -> str:
    """One machine-readable line describing a failure."""
    return f"error={error_code(exc)} type={type(exc).__name__} message={json.dumps(str(exc))}"


def main(argv=None) -> int:
    """Main entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        orchestrator = PipelineOrchestrator(
            config_path=args.config, seed=args.seed, precision=args.precision, out_dir=args.out
        )
        dispatch(orchestrator, args)
        return 0
    except KeyboardInterrupt:
        print("error=interrupted type=KeyboardInterrupt message=\"interrupted by user\"", file=sys.stderr)
        return 130
    except Exception as e:
        logger.debug("Command failed", exc_info=True)
        print(format_error(e), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
