"""
Tests for the pipeline orchestrator and the command-line entry point.

Runs the whole pipeline at toy scale: a few short items, a two-layer
network and tens of optimization steps.
"""

import json

import numpy as np
import pytest
import yaml

from src.errors import ConfigMismatchError, ScheduleError
from src.pipeline.orchestrator import SAMPLES_INDEX, PipelineOrchestrator, history_path
from src.pipeline.run import format_error, main
from src.storage.checkpoint import load_checkpoint
from src.storage.dataset import load_dataset, manifest_digest
from src.storage.formats import MEL_MAGIC, load_matrix

TOY_CONFIG = {
    "runtime": {"seed": 3, "precision": "f64"},
    "audio": {"n_mels": 16},
    "schedule": {"n_steps": 10},
    "network": {"preset": "tiny", "n_layers": 2, "residual_channels": 4, "time_embed_dim": 8},
    "conditioning": {"content_dim": 8, "proj_dim": 4, "singer_dim": 4, "n_singers": 2},
    "data": {"n_items": 6, "frames_min": 12, "frames_max": 16, "n_phonemes": 4},
    "training": {
        "batch_size": 2,
        "segment_frames": 8,
        "teacher_steps": 20,
        "distill_steps": 10,
        "log_every": 5,
        "checkpoint_every": 0,
    },
    "sampling": {"steps": 1},
    "benchmark": {"repeats": 1, "teacher_steps": 10, "frames": 16, "study_steps": [1, 2]},
    "logging": {"level": "WARNING"},
}


def _write_config(path, overrides=None):
    config = json.loads(json.dumps(TOY_CONFIG))
    for section, values in (overrides or {}).items():
        config.setdefault(section, {}).update(values)
    path.write_text(yaml.safe_dump(config))
    return path


def _orchestrator(root, **kwargs):
    root.mkdir(parents=True, exist_ok=True)
    return PipelineOrchestrator(config_path=_write_config(root / "config.yaml"), out_dir=root, **kwargs)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """Dataset, teacher and student checkpoints under one output root."""
    root = tmp_path_factory.mktemp("pipeline")
    orch = _orchestrator(root)
    orch.gen_data()
    teacher = orch.train_teacher()
    teacher_bytes = teacher.read_bytes()
    student = orch.distill()
    return orch, root, teacher, student, teacher_bytes


@pytest.mark.integration
class TestGenData:
    """Tests for dataset generation."""

    def test_deterministic_in_seed(self, tmp_path):
        """Same seed, same manifest digest; another seed differs."""
        a = _orchestrator(tmp_path / "a")
        b = _orchestrator(tmp_path / "b")
        c = _orchestrator(tmp_path / "c", seed=4)
        for orch in (a, b, c):
            orch.gen_data()
        data = "data/synthetic"
        assert manifest_digest(tmp_path / "a" / data) == manifest_digest(tmp_path / "b" / data)
        assert manifest_digest(tmp_path / "a" / data) != manifest_digest(tmp_path / "c" / data)

    def test_layout_and_stats(self, tmp_path):
        """Items follow the configured sizes; summary statistics are written."""
        orch = _orchestrator(tmp_path)
        manifest = orch.gen_data()
        items = load_dataset(manifest.parent)
        assert len(items) == 6
        for item in items:
            assert 12 <= item.mel.frames <= 16
            assert item.mel.values.shape[1] == 16
            assert item.features.content.shape[1] == 8
            assert item.singer_id in (0, 1)
        stats = json.loads((manifest.parent / "dataset_stats.json").read_text())
        assert stats["basic"]["total_items"] == 6


@pytest.mark.integration
class TestTrainTeacher:
    """Tests for teacher training through the orchestrator."""

    def test_checkpoint_contents(self, trained):
        """Teacher checkpoint holds net and encoder, step count and mel statistics."""
        _, _, teacher, _, _ = trained
        ckpt = load_checkpoint(teacher)
        assert ckpt.role == "teacher"
        assert ckpt.step == 20
        assert set(ckpt.groups) == {"net", "encoder"}
        assert ckpt.extras["sigma_data"] > 0
        assert ckpt.extras["mel_std"] > 0
        assert ckpt.schedule["n_steps"] == 10

    def test_history_written(self, trained):
        """One history record every log_every steps."""
        _, _, teacher, _, _ = trained
        lines = history_path(teacher).read_text().splitlines()
        assert [json.loads(line)["step"] for line in lines] == [5, 10, 15, 20]

    def test_identical_seeds_identical_bytes(self, tmp_path):
        """Two runs with the same seed write byte-identical checkpoints."""
        orch = _orchestrator(tmp_path)
        orch.gen_data()
        a = orch.train_teacher(out=tmp_path / "a.comc", steps=6)
        b = orch.train_teacher(out=tmp_path / "b.comc", steps=6)
        assert a.read_bytes() == b.read_bytes()

    def test_resume_matches_uninterrupted(self, tmp_path):
        """Training 4 + 4 steps with a resume equals training 8 steps."""
        orch = _orchestrator(tmp_path)
        orch.gen_data()
        whole = load_checkpoint(orch.train_teacher(out=tmp_path / "whole.comc", steps=8))
        orch.train_teacher(out=tmp_path / "part.comc", steps=4)
        resumed = load_checkpoint(
            orch.train_teacher(out=tmp_path / "part.comc", steps=4, resume=tmp_path / "part.comc")
        )
        assert resumed.step == whole.step == 8
        assert resumed.digest("net") == whole.digest("net")
        assert resumed.digest("encoder") == whole.digest("encoder")
        assert resumed.rng_state == whole.rng_state
        for path, m in whole.arrays["adam_m"].items():
            np.testing.assert_array_equal(resumed.arrays["adam_m"][path], m)

    def test_resume_rejects_student(self, trained):
        """Teacher training cannot resume from a student checkpoint."""
        orch, _, _, student, _ = trained
        with pytest.raises(ConfigMismatchError):
            orch.train_teacher(out=student.parent / "never.comc", steps=1, resume=student)

    def test_resume_rejects_other_network(self, trained, tmp_path):
        """A checkpoint of a different network shape is refused."""
        _, root, teacher, _, _ = trained
        other = PipelineOrchestrator(
            config_path=_write_config(tmp_path / "config.yaml", {"network": {"n_layers": 3}}),
            out_dir=root,
        )
        with pytest.raises(ConfigMismatchError):
            other.train_teacher(out=tmp_path / "other.comc", steps=1, resume=teacher)

    def test_resume_rejects_other_dataset(self, tmp_path):
        """Resuming on a dataset other than the checkpoint's is refused."""
        orch = _orchestrator(tmp_path)
        orch.gen_data()
        part = orch.train_teacher(out=tmp_path / "part.comc", steps=2)
        _orchestrator(tmp_path, seed=4).gen_data(out_dir=tmp_path / "other")
        with pytest.raises(ConfigMismatchError):
            orch.train_teacher(data_dir=tmp_path / "other", out=tmp_path / "part.comc", steps=2, resume=part)


@pytest.mark.integration
class TestDistill:
    """Tests for distillation through the orchestrator."""

    def test_student_checkpoint(self, trained):
        """Student holds theta, theta- and the encoder, and names its teacher."""
        _, _, teacher, student, _ = trained
        ckpt = load_checkpoint(student)
        teacher_ckpt = load_checkpoint(teacher)
        assert ckpt.role == "student"
        assert ckpt.step == 10
        assert set(ckpt.groups) == {"theta", "theta_minus", "encoder"}
        assert ckpt.extras["inference_group"] == "theta_minus"
        assert ckpt.extras["mu"] == pytest.approx(0.95)
        assert ckpt.extras["teacher_sha256"] == teacher_ckpt.digest("net")
        assert ckpt.digest("encoder") == teacher_ckpt.digest("encoder")
        assert ckpt.digest("theta") != ckpt.digest("theta_minus")

    def test_teacher_file_unchanged(self, trained):
        """Distillation never rewrites the teacher checkpoint."""
        _, _, teacher, _, teacher_bytes = trained
        assert teacher.read_bytes() == teacher_bytes

    def test_rejects_student_as_teacher(self, trained, tmp_path):
        """Distilling from a student checkpoint is a configuration mismatch."""
        orch, _, _, student, _ = trained
        with pytest.raises(ConfigMismatchError):
            orch.distill(teacher_ckpt=student, out=tmp_path / "s.comc", steps=1)


@pytest.mark.integration
class TestSample:
    """Tests for sampling through the orchestrator."""

    def _records(self, index):
        return [json.loads(line) for line in index.read_text().splitlines()]

    def test_student_one_step(self, trained, tmp_path):
        """One mel per item with NFE 1 recorded in the index."""
        orch, root, _, _, _ = trained
        index = orch.sample(out_dir=tmp_path / "s")
        records = self._records(index)
        assert len(records) == 6
        items = {item.item_id: item for item in load_dataset(root / "data/synthetic")}
        for record in records:
            assert record["nfe"] == 1
            assert record["role"] == "student"
            mel = load_matrix(tmp_path / "s" / record["path"], magic=MEL_MAGIC)
            assert mel.shape == items[record["item_id"]].mel.values.shape
            assert np.all(np.isfinite(mel))

    def test_student_multi_step_and_teacher(self, trained, tmp_path):
        """Student steps and teacher ODE steps set the NFE."""
        orch, _, teacher, _, _ = trained
        student = self._records(orch.sample(item_ids=["item00000"], steps=3, out_dir=tmp_path / "s"))
        assert student[0]["nfe"] == 3
        ode = self._records(orch.sample(ckpt_path=teacher, item_ids=["item00000"], steps=4, out_dir=tmp_path / "t"))
        assert ode[0]["nfe"] == 4
        heun = self._records(orch.sample(ckpt_path=teacher, item_ids=["item00000"], steps=4,
                                         solver="heun", out_dir=tmp_path / "h"))
        assert heun[0]["nfe"] == 7

    def test_deterministic(self, trained, tmp_path):
        """Same seed and checkpoint give byte-identical mels."""
        orch, _, _, _, _ = trained
        orch.sample(item_ids=["item00001"], out_dir=tmp_path / "a")
        orch.sample(item_ids=["item00001"], out_dir=tmp_path / "b")
        assert (tmp_path / "a" / "item00001.mel").read_bytes() == (tmp_path / "b" / "item00001.mel").read_bytes()

    def test_singer_override(self, trained, tmp_path):
        """Converting to another singer records both ids and changes the mel."""
        orch, root, _, _, _ = trained
        item = load_dataset(root / "data/synthetic")[0]
        target = 1 - item.singer_id
        own = self._records(orch.sample(item_ids=[item.item_id], out_dir=tmp_path / "own"))[0]
        conv = self._records(orch.sample(item_ids=[item.item_id], singer_id=target, out_dir=tmp_path / "conv"))[0]
        assert own["singer_id"] == own["source_singer"] == item.singer_id
        assert conv["singer_id"] == target
        assert conv["source_singer"] == item.singer_id
        a = load_matrix(tmp_path / "own" / own["path"])
        b = load_matrix(tmp_path / "conv" / conv["path"])
        assert not np.array_equal(a, b)

    def test_invalid_requests(self, trained, tmp_path):
        """Too many student steps, unknown items and unknown singers are refused."""
        orch, _, _, _, _ = trained
        with pytest.raises(ScheduleError):
            orch.sample(steps=11, out_dir=tmp_path)
        with pytest.raises(ScheduleError):
            orch.sample(steps=0, out_dir=tmp_path)
        with pytest.raises(KeyError):
            orch.sample(item_ids=["item99999"], out_dir=tmp_path)
        with pytest.raises(ValueError):
            orch.sample(singer_id=5, out_dir=tmp_path)

    @pytest.mark.parametrize("schedule", [{"t_max": 100.0}, {"rho": 5.0}, {"n_steps": 8}])
    def test_student_rejects_other_schedule(self, trained, tmp_path, schedule):
        """A student is sampled only on the grid it was distilled on."""
        _, root, _, student, _ = trained
        other = PipelineOrchestrator(
            config_path=_write_config(tmp_path / "config.yaml", {"schedule": schedule}),
            out_dir=root,
        )
        with pytest.raises(ConfigMismatchError):
            other.sample(ckpt_path=student, out_dir=tmp_path / "s")

    def test_teacher_rejects_other_schedule(self, trained, tmp_path):
        """Teacher sampling checks t_max and rho; its step count stays free."""
        _, root, teacher, _, _ = trained
        for schedule in ({"t_max": 100.0}, {"rho": 5.0}):
            other = PipelineOrchestrator(
                config_path=_write_config(tmp_path / "config.yaml", {"schedule": schedule}),
                out_dir=root,
            )
            with pytest.raises(ConfigMismatchError):
                other.sample(ckpt_path=teacher, item_ids=["item00000"], steps=2, out_dir=tmp_path / "t")
        free = PipelineOrchestrator(
            config_path=_write_config(tmp_path / "config.yaml", {"schedule": {"n_steps": 8}}),
            out_dir=root,
        )
        index = free.sample(ckpt_path=teacher, item_ids=["item00000"], steps=2, out_dir=tmp_path / "f")
        assert json.loads(index.read_text().splitlines()[0])["nfe"] == 2


@pytest.mark.integration
class TestReports:
    """Tests for evaluation and benchmark reports."""

    def test_evaluation_report(self, trained, tmp_path):
        """Per-item and mean metrics for every sampled item."""
        orch, _, _, _, _ = trained
        samples = tmp_path / "samples"
        orch.sample(out_dir=samples)
        report = orch.evaluate(samples_dir=samples, out=tmp_path / "eval.json")
        assert report["count"] == 6
        assert report["nfe"] == [1]
        assert np.isfinite(report["mean"]["mse"])
        assert report["mean"]["rtf"] > 0
        saved = json.loads((tmp_path / "eval.json").read_text())
        assert saved["count"] == 6

    def test_evaluation_needs_index(self, trained, tmp_path):
        """A directory without samples.jsonl cannot be evaluated."""
        orch, _, _, _, _ = trained
        with pytest.raises(FileNotFoundError):
            orch.evaluate(samples_dir=tmp_path)

    def test_benchmark_report(self, trained, tmp_path):
        """Teacher and student rows plus the step-count study."""
        orch, _, _, _, _ = trained
        report = orch.bench(study=True, out=tmp_path / "bench.json")
        assert [row["method"] for row in report["rows"]] == ["teacher", "student"]
        assert [row["nfe"] for row in report["rows"]] == [10, 1]
        assert report["threads"] == 1
        assert all(row["threads"] == 1 for row in report["rows"])
        assert [row["steps"] for row in report["study"]["rows"]] == [1, 2]
        assert json.loads((tmp_path / "bench.json").read_text())["frames"] == 16

    def test_benchmark_needs_both_roles(self, trained):
        """Passing a teacher where the student belongs is refused."""
        orch, _, teacher, _, _ = trained
        with pytest.raises(ConfigMismatchError):
            orch.bench(student_ckpt=teacher)

    def test_benchmark_rejects_other_schedule(self, trained, tmp_path):
        """Benchmarking with a config whose grid differs from the checkpoints is refused."""
        _, root, _, _, _ = trained
        other = PipelineOrchestrator(
            config_path=_write_config(tmp_path / "config.yaml", {"schedule": {"rho": 5.0}}),
            out_dir=root,
        )
        with pytest.raises(ConfigMismatchError):
            other.bench(out=tmp_path / "bench.json")


@pytest.mark.e2e
class TestCommandLine:
    """Tests for the command-line entry point."""

    def test_full_run(self, tmp_path):
        """gen-data, train-teacher, distill, sample, eval and bench all exit 0."""
        config = str(_write_config(tmp_path / "config.yaml"))
        base = ["--config", config, "--out", str(tmp_path)]
        assert main(base + ["gen-data"]) == 0
        assert main(base + ["train-teacher", "--steps", "4"]) == 0
        assert main(base + ["distill", "--steps", "2"]) == 0
        assert main(base + ["sample", "--items", "item00000,item00002", "--steps", "2"]) == 0
        assert main(base + ["eval"]) == 0
        assert main(base + ["bench", "--repeats", "1"]) == 0
        lines = (tmp_path / "runs/samples" / SAMPLES_INDEX).read_text().splitlines()
        assert [json.loads(line)["nfe"] for line in lines] == [2, 2]
        assert (tmp_path / "runs/reports/evaluation.json").exists()
        assert (tmp_path / "runs/reports/benchmark.json").exists()

    def test_schedule_error_exit(self, trained, capsys):
        """Student steps above N exit 1 with a schedule_error record."""
        _, root, _, _, _ = trained
        code = main(["--config", str(root / "config.yaml"), "--out", str(root), "sample", "--steps", "11"])
        assert code == 1
        assert "error=schedule_error" in capsys.readouterr().err

    def test_unknown_config_key(self, tmp_path, capsys):
        """Unknown configuration keys are rejected before any work."""
        config = _write_config(tmp_path / "config.yaml", {"training": {"learning_rate": 1.0}})
        assert main(["--config", str(config), "--out", str(tmp_path), "gen-data"]) == 1
        assert "error=invalid_value" in capsys.readouterr().err
        assert not (tmp_path / "data").exists()

    def test_missing_checkpoint(self, tmp_path, capsys):
        """A missing checkpoint is reported as file_not_found."""
        config = str(_write_config(tmp_path / "config.yaml"))
        assert main(["--config", config, "--out", str(tmp_path), "sample"]) == 1
        assert "error=file_not_found" in capsys.readouterr().err

    def test_format_error_line(self):
        """Error lines carry code, type and a JSON-quoted message."""
        line = format_error(ScheduleError('steps "9" > N'))
        assert line == 'error=schedule_error type=ScheduleError message="steps \\"9\\" > N"'
