"""
Pipeline orchestrator.

One method per command: generate a dataset, train the teacher, distill the
student, sample mels, evaluate samples and benchmark sampling speed. Every
command is deterministic in ``runtime.seed``.
"""

import json
import logging
import pathlib
import time
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.config import Config, reload_config
from src.diffusion.sampler import sample_student, sample_teacher
from src.diffusion.schedule import Precond, TimeGrid, karras_grid
from src.errors import ConfigMismatchError, ScheduleError, TrainingDivergedError
from src.evaluation.benchmark import run_benchmark, run_step_study
from src.evaluation.dataset_stats import DatasetStatistics, estimate_sigma_data
from src.evaluation.metrics import evaluate_items, mel_peak_f0, rtf
from src.features.conditioning import CondConfig, CondEncoder
from src.features.content import DatasetItem
from src.features.synthetic import SynthSpec, synth_dataset
from src.models.denoiser import NetworkDenoiser, WaveNetConfig, check_params, init_denoiser_params, preset
from src.numcore.rng import Rng
from src.numcore.tensor import Tensor, set_precision
from src.records import format_record
from src.storage.checkpoint import Checkpoint, load_checkpoint, require_matching_config, save_checkpoint
from src.storage.dataset import load_dataset, manifest_digest, save_dataset
from src.storage.formats import MEL_MAGIC, atomic_write_bytes, load_matrix, save_matrix
from src.training.batching import BatchSampler, MelNormalizer
from src.training.distill import DistillState, run_distillation
from src.training.optimizer import AdamW
from src.training.teacher import TrainState, train_teacher

# Try to import visualizations (optional dependency)
try:
    from src.evaluation.visualizations import HAS_MATPLOTLIB, TrainingVisualizer
except ImportError:
    HAS_MATPLOTLIB = False
    TrainingVisualizer = None

logger = logging.getLogger(__name__)

HISTORY_SUFFIX = ".history.jsonl"
SAMPLES_INDEX = "samples.jsonl"
STUDY_ITEMS = 8
# Teacher sampling picks its own step count; a student is tied to the grid it was distilled on.
TEACHER_GRID_KEYS = ("epsilon", "t_max", "rho")
STUDENT_GRID_KEYS = ("epsilon", "t_max", "rho", "n_steps")


def history_path(checkpoint: pathlib.Path) -> pathlib.Path:
    """history.jsonl written beside a checkpoint."""
    return checkpoint.with_name(checkpoint.stem + HISTORY_SUFFIX)


def _append_jsonl(path: pathlib.Path, records: Sequence[Dict[str, Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True) + "\n")


def _write_json(path: pathlib.Path, payload: Dict[str, Any]) -> None:
    atomic_write_bytes(path, (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("utf-8"))


def _optimizer_arrays(optimizer: AdamW) -> Dict[str, Dict[str, np.ndarray]]:
    return {"adam_m": dict(optimizer.m), "adam_v": dict(optimizer.v)}


def _restore_optimizer(optimizer: AdamW, ckpt: Checkpoint) -> None:
    optimizer.load_state_dict({
        "step": ckpt.extras["optimizer_step"],
        "m": ckpt.arrays["adam_m"],
        "v": ckpt.arrays["adam_v"],
    })


class PipelineOrchestrator:
    """
    Runs the commands of the mel decoder pipeline.

    Artifacts are written under ``out_dir`` (default: current directory) at
    the locations named in ``config.paths`` unless a command is given an
    explicit path.
    """

    def __init__(
        self,
        config_path: Optional[pathlib.Path] = None,
        seed: Optional[int] = None,
        precision: Optional[str] = None,
        out_dir: Optional[pathlib.Path] = None,
        config: Optional[Config] = None,
    ):
        """
        Args:
            config_path: Optional path to config file. If None, uses default.
            seed: Overrides ``runtime.seed``
            precision: Overrides ``runtime.precision`` ("f32" or "f64")
            out_dir: Root for relative artifact paths
            config: Ready-made config (skips loading ``config_path``)
        """
        self.config = config if config is not None else reload_config(config_path)
        if seed is not None:
            self.config.runtime.seed = seed
        if precision is not None:
            self.config.runtime.precision = precision
        self.out_dir = pathlib.Path(out_dir) if out_dir is not None else pathlib.Path.cwd()

        # Setup logging
        log_level = getattr(logging, self.config.logging.level.upper(), logging.INFO)
        logging.basicConfig(level=log_level, format=self.config.logging.format)
        set_precision(self.config.runtime.precision)

        logger.info("Pipeline orchestrator initialized")
        logger.info(f"  Output root: {self.out_dir}")
        logger.info(f"  Seed: {self.config.runtime.seed}, precision: {self.config.runtime.precision}")

    # ------------------------------------------------------------------
    # helpers
    # ------------------------------------------------------------------

    def resolve(self, path: Optional[pathlib.Path], default: str) -> pathlib.Path:
        """Explicit path, or ``default`` relative to the output root."""
        path = pathlib.Path(path) if path is not None else pathlib.Path(default)
        return path if path.is_absolute() else self.out_dir / path

    def grid(self, n_steps: Optional[int] = None) -> TimeGrid:
        s = self.config.schedule
        return karras_grid(n_steps or s.n_steps, s.epsilon, s.t_max, s.rho)

    def cond_config(self) -> Optional[CondConfig]:
        c = self.config.conditioning
        if not c.enabled:
            return None
        return CondConfig(content_dim=c.content_dim, proj_dim=c.proj_dim, singer_dim=c.singer_dim, n_singers=c.n_singers)

    def network_config(self) -> WaveNetConfig:
        return preset(
            self.config.network.preset,
            cond_dim=self.config.cond_dim(),
            mel_bins=self.config.audio.n_mels,
            **self.config.network_overrides(),
        )

    def _snapshot(self, network: WaveNetConfig, cond: Optional[CondConfig]) -> Dict[str, Any]:
        return {
            "network": network.to_dict(),
            "conditioning": None if cond is None else {
                "content_dim": cond.content_dim,
                "proj_dim": cond.proj_dim,
                "singer_dim": cond.singer_dim,
                "n_singers": cond.n_singers,
            },
            "run": self.config.model_dump(mode="json"),
        }

    def _schedule(self, grid: TimeGrid) -> Dict[str, Any]:
        return {**grid.to_dict(), "p_mean": self.config.schedule.p_mean, "p_std": self.config.schedule.p_std}

    def _require_schedule(self, ckpt: Checkpoint, keys: Sequence[str] = ("epsilon", "t_max")) -> None:
        """
        Compare schedule fields of a checkpoint with the config.

        Preconditioning needs ``epsilon`` and ``t_max``; a student was
        distilled on one grid, so sampling it also needs ``rho`` and ``n_steps``.
        """
        s = self.config.schedule
        for key in keys:
            if ckpt.schedule.get(key) != getattr(s, key):
                raise ConfigMismatchError(
                    f"schedule {key} differs: checkpoint={ckpt.schedule.get(key)!r} config={getattr(s, key)!r}"
                )

    @staticmethod
    def restore_models(
        ckpt: Checkpoint, group: str
    ) -> Tuple[NetworkDenoiser, Optional[CondEncoder], MelNormalizer]:
        """Denoiser for parameter ``group``, the encoder and the mel normalizer of a checkpoint."""
        network = WaveNetConfig(**ckpt.config["network"])
        params = ckpt.group(group)
        check_params(params, network)
        precond = Precond(
            sigma_data=float(ckpt.extras["sigma_data"]),
            epsilon=float(ckpt.schedule["epsilon"]),
            t_max=float(ckpt.schedule["t_max"]),
        )
        cond_dict = ckpt.config.get("conditioning")
        encoder = None
        if cond_dict is not None:
            encoder = CondEncoder(ckpt.group("encoder"), CondConfig(**cond_dict))
        normalizer = MelNormalizer(mean=float(ckpt.extras["mel_mean"]), std=float(ckpt.extras["mel_std"]))
        return NetworkDenoiser(params, network, precond), encoder, normalizer

    def _load_items(self, data_dir: Optional[pathlib.Path]) -> Tuple[pathlib.Path, List[DatasetItem]]:
        root = self.resolve(data_dir, self.config.paths.data_dir)
        items = load_dataset(root)
        if not items:
            raise ValueError(f"dataset at {root} is empty")
        return root, items

    # ------------------------------------------------------------------
    # commands
    # ------------------------------------------------------------------

    def gen_data(self, out_dir: Optional[pathlib.Path] = None) -> pathlib.Path:
        """
        Generate the synthetic conditional dataset.

        Returns:
            Path of the manifest
        """
        logger.info("=" * 80)
        logger.info("GENERATE DATASET")
        logger.info("=" * 80)

        root = self.resolve(out_dir, self.config.paths.data_dir)
        d, c, a = self.config.data, self.config.conditioning, self.config.audio
        spec = SynthSpec(
            n_items=d.n_items,
            frames_min=d.frames_min,
            frames_max=d.frames_max,
            n_singers=c.n_singers,
            content_dim=c.content_dim,
            n_phonemes=d.n_phonemes,
            n_mels=a.n_mels,
            sample_rate=a.sample_rate,
            hop=a.hop_length,
        )
        items = synth_dataset(Rng(self.config.runtime.seed), spec)
        manifest = save_dataset(items, root)

        stats = DatasetStatistics(items, source=str(root))
        stats.compute_all()
        stats.save_json(root / "dataset_stats.json")

        logger.info(format_record("gen_data", items=len(items), manifest_sha256=manifest_digest(root), path=str(root)))
        return manifest

    def train_teacher(
        self,
        data_dir: Optional[pathlib.Path] = None,
        out: Optional[pathlib.Path] = None,
        steps: Optional[int] = None,
        resume: Optional[pathlib.Path] = None,
    ) -> pathlib.Path:
        """
        Train the teacher denoiser and write its checkpoint.

        Periodic checkpoints overwrite ``out``; if training diverges the last
        good checkpoint is left in place and the error is re-raised.
        """
        logger.info("=" * 80)
        logger.info("TRAIN TEACHER")
        logger.info("=" * 80)

        cfg, t = self.config, self.config.training
        data_root, items = self._load_items(data_dir)
        out = self.resolve(out, cfg.paths.teacher_checkpoint)
        steps = t.teacher_steps if steps is None else steps

        normalizer = MelNormalizer.fit(items) if cfg.data.normalize else MelNormalizer()
        sigma_data = cfg.schedule.sigma_data
        if sigma_data == "auto":
            sigma_data = estimate_sigma_data(items, normalizer)
        grid = self.grid()
        precond = Precond(sigma_data=float(sigma_data), epsilon=grid.epsilon, t_max=grid.t_max)

        network = self.network_config()
        cond = self.cond_config()
        init_rng, train_rng = Rng(cfg.runtime.seed).spawn(2)
        encoder = CondEncoder.initialize(cond, init_rng) if cond is not None else None
        params = init_denoiser_params(network, init_rng)
        state = TrainState.create(
            params, network, precond, train_rng, encoder,
            lr=t.lr_teacher, betas=tuple(t.betas), eps=t.eps, weight_decay=t.weight_decay,
            p_mean=cfg.schedule.p_mean, p_std=cfg.schedule.p_std,
        )
        snapshot = self._snapshot(network, cond)

        if resume is not None:
            ckpt = load_checkpoint(self.resolve(resume, cfg.paths.teacher_checkpoint))
            if ckpt.role != "teacher":
                raise ConfigMismatchError(f"cannot resume teacher training from a {ckpt.role} checkpoint")
            require_matching_config(ckpt, "network", network.to_dict())
            self._require_schedule(ckpt)
            data_sha256 = manifest_digest(data_root)
            if ckpt.extras.get("data_sha256") != data_sha256:
                raise ConfigMismatchError(
                    f"dataset differs from the one being resumed: "
                    f"checkpoint={ckpt.extras.get('data_sha256')!r} data={data_sha256!r}"
                )
            params.load_arrays(ckpt.group("net").arrays())
            if encoder is not None:
                encoder.params.load_arrays(ckpt.group("encoder").arrays())
            _restore_optimizer(state.optimizer, ckpt)
            state.rng.set_state(ckpt.rng_state)
            state.step = ckpt.step
            logger.info(f"Resumed teacher training at step {state.step} from {resume}")

        extras = {
            **normalizer.to_dict(),
            "sigma_data": float(sigma_data),
            "data_sha256": manifest_digest(data_root),
        }
        hist = history_path(out)
        if resume is None and hist.exists():
            hist.unlink()
        written = [0]

        def checkpoint(s: TrainState) -> None:
            groups = {"net": s.params}
            if s.encoder is not None:
                groups["encoder"] = s.encoder.params
            ckpt = Checkpoint(
                role="teacher",
                step=s.step,
                groups=groups,
                config=snapshot,
                schedule=self._schedule(grid),
                extras={**extras, "optimizer_step": s.optimizer.step_count, "last_loss": s.last_loss},
                rng_state=s.rng.get_state(),
                arrays=_optimizer_arrays(s.optimizer),
            )
            save_checkpoint(out, ckpt)
            _append_jsonl(hist, s.history[written[0]:])
            written[0] = len(s.history)
            logger.info(format_record("checkpoint", role="teacher", step=s.step, path=str(out)))

        sampler = BatchSampler(items, t.batch_size, t.segment_frames, normalizer)
        try:
            train_teacher(
                state,
                sampler.sample,
                steps,
                log_every=t.log_every,
                on_checkpoint=checkpoint,
                checkpoint_every=t.checkpoint_every,
                progress=cfg.runtime.progress,
            )
        except TrainingDivergedError as e:
            logger.error(f"Teacher training diverged at step {e.step or state.step}: {e}")
            if out.exists():
                logger.error(f"  Last good checkpoint retained: {out}")
            raise

        checkpoint(state)
        logger.info(format_record("train_done", role="teacher", step=state.step, loss=state.last_loss, path=str(out)))
        return out

    def distill(
        self,
        teacher_ckpt: Optional[pathlib.Path] = None,
        data_dir: Optional[pathlib.Path] = None,
        out: Optional[pathlib.Path] = None,
        steps: Optional[int] = None,
    ) -> pathlib.Path:
        """
        Distill a one-step student from a frozen teacher checkpoint.

        The student checkpoint holds theta, theta- and the frozen encoder;
        theta- is the group used for sampling.
        """
        logger.info("=" * 80)
        logger.info("CONSISTENCY DISTILLATION")
        logger.info("=" * 80)

        cfg, t = self.config, self.config.training
        teacher_path = self.resolve(teacher_ckpt, cfg.paths.teacher_checkpoint)
        ckpt = load_checkpoint(teacher_path)
        if ckpt.role != "teacher":
            raise ConfigMismatchError(f"{teacher_path} is a {ckpt.role} checkpoint, expected a teacher")
        require_matching_config(ckpt, "network", self.network_config().to_dict())
        self._require_schedule(ckpt)
        teacher, encoder, normalizer = self.restore_models(ckpt, "net")

        _, items = self._load_items(data_dir)
        out = self.resolve(out, cfg.paths.student_checkpoint)
        steps = t.distill_steps if steps is None else steps
        grid = self.grid()
        teacher_digest = teacher.params.digest()

        ds = DistillState.create(
            init_params=teacher.params,
            teacher=teacher,
            network=teacher.config,
            precond=teacher.precond,
            grid=grid,
            rng=Rng(cfg.runtime.seed).spawn(3)[2],
            encoder=encoder,
            mu=t.mu,
            lr=t.lr_distill,
            betas=tuple(t.betas),
            eps=t.eps,
            weight_decay=t.weight_decay,
        )
        hist = history_path(out)
        if hist.exists():
            hist.unlink()
        written = [0]

        def checkpoint(s: DistillState) -> None:
            groups = {"theta": s.theta, "theta_minus": s.theta_minus}
            if s.encoder is not None:
                groups["encoder"] = s.encoder.params
            save_checkpoint(out, Checkpoint(
                role="student",
                step=s.step,
                groups=groups,
                config=ckpt.config,
                schedule=self._schedule(grid),
                extras={
                    **{k: ckpt.extras[k] for k in ("mel_mean", "mel_std", "sigma_data")},
                    "mu": s.mu,
                    "inference_group": "theta_minus",
                    "teacher_sha256": teacher_digest,
                    "optimizer_step": s.optimizer.step_count,
                    "last_loss": s.last_loss,
                },
                rng_state=s.rng.get_state(),
                arrays=_optimizer_arrays(s.optimizer),
            ))
            _append_jsonl(hist, s.history[written[0]:])
            written[0] = len(s.history)
            logger.info(format_record("checkpoint", role="student", step=s.step, path=str(out)))

        sampler = BatchSampler(items, t.batch_size, t.segment_frames, normalizer)
        try:
            run_distillation(
                ds,
                sampler.sample,
                steps,
                log_every=t.log_every,
                on_checkpoint=checkpoint,
                checkpoint_every=t.checkpoint_every,
                progress=cfg.runtime.progress,
            )
        except TrainingDivergedError as e:
            logger.error(f"Distillation diverged at step {e.step or ds.step}: {e}")
            if out.exists():
                logger.error(f"  Last good checkpoint retained: {out}")
            raise

        if teacher.params.digest() != teacher_digest:
            raise RuntimeError("teacher parameters changed during distillation")
        checkpoint(ds)
        logger.info(format_record("distill_done", step=ds.step, loss=ds.last_loss, mu=ds.mu, teacher_sha256=teacher_digest))
        return out

    def sample(
        self,
        ckpt_path: Optional[pathlib.Path] = None,
        data_dir: Optional[pathlib.Path] = None,
        item_ids: Optional[Sequence[str]] = None,
        singer_id: Optional[int] = None,
        steps: Optional[int] = None,
        out_dir: Optional[pathlib.Path] = None,
        use_ema: Optional[bool] = None,
        solver: Optional[str] = None,
    ) -> pathlib.Path:
        """
        Decode mels for dataset items and write them as COMM files.

        A teacher checkpoint samples with the ODE solver over ``steps`` grid
        intervals (default N); a student checkpoint samples with ``steps``
        consistency steps (default ``sampling.steps``). ``singer_id`` other
        than an item's own singer performs conversion.

        Returns:
            Path of the ``samples.jsonl`` index
        """
        logger.info("=" * 80)
        logger.info("SAMPLE")
        logger.info("=" * 80)

        cfg = self.config
        ckpt = load_checkpoint(self.resolve(ckpt_path, cfg.paths.student_checkpoint))
        use_ema = cfg.sampling.use_ema if use_ema is None else use_ema
        solver = solver or cfg.sampling.solver
        if ckpt.role == "teacher":
            group = "net"
            self._require_schedule(ckpt, TEACHER_GRID_KEYS)
            if steps is not None and steps < 1:
                raise ScheduleError(f"teacher sampling needs steps >= 1, got {steps}")
            grid = self.grid(steps)
        else:
            group = "theta_minus" if use_ema else "theta"
            self._require_schedule(ckpt, STUDENT_GRID_KEYS)
            grid = self.grid()
            steps = cfg.sampling.steps if steps is None else steps
            if not 1 <= steps <= grid.n_steps:
                raise ScheduleError(f"student sampling needs steps in [1, {grid.n_steps}], got {steps}")
        denoiser, encoder, normalizer = self.restore_models(ckpt, group)

        _, items = self._load_items(data_dir)
        if item_ids:
            by_id = {item.item_id: item for item in items}
            missing = [i for i in item_ids if i not in by_id]
            if missing:
                raise KeyError(f"unknown item ids: {missing}")
            items = [by_id[i] for i in item_ids]
        if singer_id is not None and encoder is not None:
            encoder.table.check_ids(singer_id)

        out_dir = self.resolve(out_dir, cfg.paths.samples_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        streams = Rng(cfg.runtime.seed).spawn(len(items))
        records = []
        for item, rng in zip(items, streams):
            target_singer = item.singer_id if singer_id is None else singer_id
            cond: Optional[Tensor] = None
            if encoder is not None:
                cond = encoder(item.features, target_singer)
            shape = (denoiser.config.mel_bins, item.mel.frames)
            denoiser.reset_nfe()
            started = time.perf_counter()
            if ckpt.role == "teacher":
                x = sample_teacher(denoiser, cond, grid, rng, solver=solver, shape=shape)
            else:
                x = sample_student(denoiser, cond, steps, grid, rng, shape=shape)
            wall = time.perf_counter() - started
            mel = normalizer.denormalize(x).T
            path = out_dir / f"{item.item_id}.mel"
            save_matrix(path, mel, MEL_MAGIC)
            record = {
                "item_id": item.item_id,
                "role": ckpt.role,
                "source_singer": int(item.singer_id),
                "singer_id": int(target_singer),
                "steps": grid.n_steps if ckpt.role == "teacher" else steps,
                "nfe": denoiser.nfe,
                "wall_s": wall,
                "rtf": rtf(wall, item.mel.frames, cfg.audio.hop_length, cfg.audio.sample_rate),
                "path": path.name,
            }
            records.append(record)
            logger.info(format_record("sample", **record))

        index = out_dir / SAMPLES_INDEX
        atomic_write_bytes(index, "".join(json.dumps(r, sort_keys=True) + "\n" for r in records).encode("utf-8"))
        return index

    def evaluate(
        self,
        samples_dir: Optional[pathlib.Path] = None,
        data_dir: Optional[pathlib.Path] = None,
        out: Optional[pathlib.Path] = None,
    ) -> Dict[str, Any]:
        """
        Compare sampled mels with their references (MSE, FPC, RTF).

        Writes ``evaluation.json`` (per-item and mean metrics) and, when
        matplotlib is available, loss curves and mel comparison figures.
        """
        logger.info("=" * 80)
        logger.info("EVALUATION")
        logger.info("=" * 80)

        cfg = self.config
        samples_dir = self.resolve(samples_dir, cfg.paths.samples_dir)
        index = samples_dir / SAMPLES_INDEX
        if not index.exists():
            raise FileNotFoundError(f"samples index not found: {index}")
        records = [json.loads(line) for line in index.read_text(encoding="utf-8").splitlines() if line.strip()]
        _, items = self._load_items(data_dir)
        by_id = {item.item_id: item for item in items}

        ids, refs, gens, f0_refs, f0_gens, walls = [], [], [], [], [], []
        for record in records:
            item = by_id.get(record["item_id"])
            if item is None:
                raise KeyError(f"sample {record['item_id']} has no reference item")
            generated = load_matrix(samples_dir / record["path"], magic=MEL_MAGIC).astype(np.float64)
            ids.append(item.item_id)
            refs.append(item.mel.values)
            gens.append(generated)
            f0_refs.append(np.where(item.features.vuv, item.features.f0, 0.0))
            f0_gens.append(mel_peak_f0(generated, cfg.audio.sample_rate, cfg.audio.f0_min, cfg.audio.f0_max))
            walls.append(record["wall_s"])

        report = evaluate_items(ids, refs, gens, f0_refs, f0_gens, walls, cfg.audio.hop_length, cfg.audio.sample_rate)
        report["nfe"] = sorted({r["nfe"] for r in records})
        out = self.resolve(out, pathlib.Path(cfg.paths.reports_dir) / "evaluation.json")
        out.parent.mkdir(parents=True, exist_ok=True)
        _write_json(out, report)
        logger.info(format_record("eval", count=report["count"], **report["mean"]))

        if HAS_MATPLOTLIB and TrainingVisualizer:
            try:
                viz = TrainingVisualizer(out.parent / "visualizations")
                histories = {
                    "teacher": history_path(self.resolve(None, cfg.paths.teacher_checkpoint)),
                    "distill": history_path(self.resolve(None, cfg.paths.student_checkpoint)),
                }
                viz.generate_all(histories, list(zip(ids, refs, gens))[:4])
            except Exception as e:
                logger.warning(f"  Visualization generation failed: {e}")
        else:
            logger.info("  Visualizations skipped (matplotlib not available)")

        return report

    def bench(
        self,
        teacher_ckpt: Optional[pathlib.Path] = None,
        student_ckpt: Optional[pathlib.Path] = None,
        repeats: Optional[int] = None,
        study: bool = False,
        data_dir: Optional[pathlib.Path] = None,
        out: Optional[pathlib.Path] = None,
    ) -> Dict[str, Any]:
        """
        Time teacher (N-step Euler) against student (1-step) sampling and,
        with ``study``, run the step-count study on dataset items.
        """
        logger.info("=" * 80)
        logger.info("BENCHMARK")
        logger.info("=" * 80)

        cfg, b = self.config, self.config.benchmark
        t_ckpt = load_checkpoint(self.resolve(teacher_ckpt, cfg.paths.teacher_checkpoint))
        s_ckpt = load_checkpoint(self.resolve(student_ckpt, cfg.paths.student_checkpoint))
        if t_ckpt.role != "teacher" or s_ckpt.role != "student":
            raise ConfigMismatchError(f"benchmark needs teacher and student checkpoints, got {t_ckpt.role} and {s_ckpt.role}")
        self._require_schedule(t_ckpt, TEACHER_GRID_KEYS)
        self._require_schedule(s_ckpt, STUDENT_GRID_KEYS)
        teacher, encoder, normalizer = self.restore_models(t_ckpt, "net")
        group = "theta_minus" if cfg.sampling.use_ema else "theta"
        student, s_encoder, _ = self.restore_models(s_ckpt, group)

        cond = None
        if encoder is not None:
            c = encoder.config
            spec = SynthSpec(
                n_items=1, frames_min=b.frames, frames_max=b.frames, n_singers=c.n_singers,
                content_dim=c.content_dim, n_mels=teacher.config.mel_bins,
            )
            item = synth_dataset(Rng(cfg.runtime.seed), spec)[0]
            cond = encoder(item.features, item.singer_id)

        rows = run_benchmark(
            teacher, student, cond, self.grid(b.teacher_steps),
            repeats=b.repeats if repeats is None else repeats,
            seed=cfg.runtime.seed,
            frames=b.frames,
            hop=cfg.audio.hop_length,
            sample_rate=cfg.audio.sample_rate,
            threads=b.threads,
        )
        report: Dict[str, Any] = {
            "precision": cfg.runtime.precision,
            "threads": b.threads,
            "network": teacher.config.to_dict(),
            "frames": b.frames,
            "rows": [row.__dict__ for row in rows],
        }

        if study:
            _, items = self._load_items(data_dir)
            items = items[:STUDY_ITEMS]
            conds = [s_encoder(item.features, item.singer_id) if s_encoder is not None else None for item in items]
            targets = [item.mel.values.T for item in items]
            report["study"] = run_step_study(
                student, conds, targets, self.grid(), b.study_steps,
                seed=cfg.runtime.seed, postprocess=normalizer.denormalize, threads=b.threads,
            )

        out = self.resolve(out, pathlib.Path(cfg.paths.reports_dir) / "benchmark.json")
        out.parent.mkdir(parents=True, exist_ok=True)
        _write_json(out, report)
        return report

    def run(self, command: str, **kwargs) -> Any:
        """
        Run one command by name.

        Args:
            command: gen_data, train_teacher, distill, sample, evaluate or bench
            **kwargs: Passed to the command method
        """
        commands = {
            "gen_data": self.gen_data,
            "train_teacher": self.train_teacher,
            "distill": self.distill,
            "sample": self.sample,
            "evaluate": self.evaluate,
            "bench": self.bench,
        }
        if command not in commands:
            raise ValueError(f"Unknown command: {command}; valid commands: {list(commands)}")
        started = time.perf_counter()
        result = commands[command](**kwargs)
        logger.info(format_record("command_done", command=command, wall_s=time.perf_counter() - started))
        return result
