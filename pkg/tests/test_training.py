"""
Tests for AdamW, batching and teacher training.
"""

import numpy as np
import pytest

from src.diffusion.oracle import GaussianSpec, analytic_denoiser
from src.diffusion.schedule import Precond
from src.errors import TrainingDivergedError
from src.features.conditioning import CondConfig, CondEncoder
from src.features.synthetic import SynthSpec, synth_dataset
from src.models.denoiser import NetworkDenoiser, init_denoiser_params, preset
from src.models.params import ParamSet
from src.numcore.rng import Rng
from src.numcore.tensor import Tensor
from src.training.batching import (
    BatchSampler,
    GaussianBatchSampler,
    MelNormalizer,
    crop_batch,
)
from src.training.optimizer import AdamW
from src.training.teacher import TrainState, add_noise, train_step, train_teacher


def _param(value, grad=None) -> ParamSet:
    t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)
    if grad is not None:
        t.grad = np.asarray(grad, dtype=np.float64)
    return ParamSet({"w": t})


@pytest.mark.unit
class TestAdamW:
    """Tests for the optimizer update rule."""

    def test_first_step_formula(self):
        """Decoupled decay then a bias-corrected Adam step."""
        params = _param([1.0, -2.0], grad=[0.5, -0.1])
        opt = AdamW(params, lr=0.1, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01)
        opt.step()
        p = np.array([1.0, -2.0]) * (1 - 0.1 * 0.01)
        g = np.array([0.5, -0.1])
        m_hat = (0.1 * g) / (1 - 0.9)
        v_hat = (0.001 * g * g) / (1 - 0.999)
        expected = p - 0.1 * m_hat / (np.sqrt(v_hat) + 1e-8)
        np.testing.assert_allclose(params["w"].data, expected, rtol=1e-12)
        assert opt.step_count == 1

    def test_matches_torch(self):
        """Three steps agree with torch.optim.AdamW."""
        torch = pytest.importorskip("torch")
        rng = Rng(0)
        init = rng.normal((4, 3))
        grads = [rng.normal((4, 3)) for _ in range(3)]

        params = _param(init)
        opt = AdamW(params, lr=0.01, betas=(0.9, 0.99), eps=1e-6, weight_decay=0.05)
        ref = torch.tensor(init, dtype=torch.float64, requires_grad=True)
        ref_opt = torch.optim.AdamW([ref], lr=0.01, betas=(0.9, 0.99), eps=1e-6, weight_decay=0.05)
        for g in grads:
            params["w"].grad = g
            opt.step()
            ref.grad = torch.tensor(g, dtype=torch.float64)
            ref_opt.step()
        np.testing.assert_allclose(params["w"].data, ref.detach().numpy(), rtol=1e-10, atol=1e-12)

    def test_zero_learning_rate(self):
        """lr = 0 leaves parameters unchanged but still tracks moments."""
        params = _param([1.0, 2.0], grad=[0.3, 0.3])
        opt = AdamW(params, lr=0.0)
        opt.step()
        np.testing.assert_array_equal(params["w"].data, [1.0, 2.0])
        assert np.all(opt.m["w"] != 0)

    def test_skips_parameters_without_grad(self):
        """No gradient, no update (not even weight decay)."""
        params = _param([1.0])
        AdamW(params, lr=0.1, weight_decay=0.5).step()
        np.testing.assert_array_equal(params["w"].data, [1.0])

    def test_non_finite_gradient(self):
        """NaN gradient raises before any parameter or moment changes."""
        params = _param([1.0, 2.0], grad=[np.nan, 0.1])
        opt = AdamW(params, lr=0.1)
        with pytest.raises(TrainingDivergedError) as info:
            opt.step()
        assert info.value.step == 1
        np.testing.assert_array_equal(params["w"].data, [1.0, 2.0])
        np.testing.assert_array_equal(opt.m["w"], [0.0, 0.0])
        assert opt.step_count == 0

    def test_state_dict_resumes_exactly(self):
        """Restoring the state reproduces the next update bit-for-bit."""
        rng = Rng(1)
        init, g1, g2 = rng.normal((3,)), rng.normal((3,)), rng.normal((3,))

        a = _param(init, grad=g1)
        opt_a = AdamW(a, lr=0.05)
        opt_a.step()

        b = _param(a["w"].data.copy())
        opt_b = AdamW(b, lr=0.05)
        opt_b.load_state_dict(opt_a.state_dict())

        a["w"].grad, b["w"].grad = g2, g2.copy()
        opt_a.step()
        opt_b.step()
        np.testing.assert_array_equal(a["w"].data, b["w"].data)
        assert opt_b.step_count == 2

    def test_invalid_hyperparameters(self):
        """Negative lr or betas outside [0, 1) are rejected."""
        with pytest.raises(ValueError):
            AdamW(_param([1.0]), lr=-1.0)
        with pytest.raises(ValueError):
            AdamW(_param([1.0]), betas=(1.0, 0.999))


SPEC = SynthSpec(n_items=8, frames_min=12, frames_max=20, n_singers=2, content_dim=6, n_mels=4)


@pytest.mark.unit
class TestBatching:
    """Tests for normalization and cropping."""

    def test_normalizer(self):
        """fit gives zero mean and unit std; denormalize inverts normalize."""
        items = synth_dataset(Rng(0), SPEC)
        norm = MelNormalizer.fit(items)
        values = np.concatenate([norm.normalize(i.mel.values).ravel() for i in items])
        assert values.mean() == pytest.approx(0.0, abs=1e-9)
        assert values.std() == pytest.approx(1.0)
        mel = items[0].mel.values
        np.testing.assert_allclose(norm.denormalize(norm.normalize(mel)), mel)

    def test_normalizer_validation(self):
        """Non-positive std and empty datasets are rejected."""
        with pytest.raises(ValueError):
            MelNormalizer(std=0.0)
        with pytest.raises(ValueError):
            MelNormalizer.fit([])

    def test_crop_shapes(self):
        """Crops share one length, at most the segment and the shortest item."""
        items = synth_dataset(Rng(0), SPEC)[:3]
        batch = crop_batch(items, Rng(1), segment_frames=100)
        shortest = min(i.mel.frames for i in items)
        assert batch.x0.shape == (3, 4, shortest)
        assert batch.content.shape == (3, shortest, 6)
        assert batch.prosody.shape == (3, shortest, 3)
        np.testing.assert_array_equal(batch.singer_ids, [i.singer_id for i in items])

    def test_crop_alignment(self):
        """Mel and feature crops come from the same frames."""
        item = synth_dataset(Rng(0), SPEC)[0]
        batch = crop_batch([item], Rng(2), segment_frames=5)
        mel_t = batch.x0[0].T
        start = next(s for s in range(item.mel.frames - 4) if np.array_equal(item.mel.values[s:s + 5], mel_t))
        np.testing.assert_array_equal(batch.content[0], item.features.content[start:start + 5])

    def test_sampler_deterministic(self):
        """Same rng seed, same batch."""
        sampler = BatchSampler(synth_dataset(Rng(0), SPEC), batch_size=4, segment_frames=8)
        a, b = sampler.sample(Rng(5)), sampler.sample(Rng(5))
        np.testing.assert_array_equal(a.x0, b.x0)
        np.testing.assert_array_equal(a.singer_ids, b.singer_ids)

    def test_gaussian_sampler(self):
        """Unconditional batches of the requested shape."""
        batch = GaussianBatchSampler(GaussianSpec(), batch_size=3, mel_bins=1, frames=5).sample(Rng(0))
        assert batch.x0.shape == (3, 1, 5)
        assert not batch.has_cond


@pytest.mark.unit
class TestNoising:
    """Tests for the forward noising process."""

    def test_noise_variance(self):
        """Var(x_t - x0) is t^2 within 2%."""
        x0 = np.zeros(100_000)
        x_t = add_noise(x0, 0.7, Rng(0)).data
        assert np.var(x_t) == pytest.approx(0.49, rel=0.02)

    def test_per_item_levels(self):
        """One level per leading item."""
        x_t = add_noise(np.zeros((2, 50_000)), np.array([0.1, 3.0]), Rng(1)).data
        assert np.std(x_t[0]) == pytest.approx(0.1, rel=0.02)
        assert np.std(x_t[1]) == pytest.approx(3.0, rel=0.02)


def _state(small_network, precond, seed=0, lr=1e-4):
    cond = CondConfig(content_dim=SPEC.content_dim, proj_dim=1, singer_dim=3, n_singers=SPEC.n_singers)
    rng = Rng(seed)
    encoder = CondEncoder.initialize(cond, rng)
    params = init_denoiser_params(small_network, rng)
    return TrainState.create(params, small_network, precond, rng, encoder, lr=lr)


def _sampler(segment=8, batch_size=4):
    items = synth_dataset(Rng(9), SPEC)
    return BatchSampler(items, batch_size, segment, MelNormalizer.fit(items))


@pytest.mark.unit
class TestTeacherTraining:
    """Tests for teacher update steps."""

    def test_step_updates_network_and_encoder(self, small_network, precond):
        """Steps change both parameter groups and record the loss."""
        state = _state(small_network, precond)
        before_net = state.params.digest()
        train_step(state, _sampler().sample(Rng(1)))
        content_w = state.encoder.params["encoder/content/weight"].data.copy()
        train_step(state, _sampler().sample(Rng(2)))
        assert state.step == 2
        assert np.isfinite(state.last_loss)
        assert state.params.digest() != before_net
        assert not np.allclose(state.encoder.params["encoder/content/weight"].data, content_w, rtol=0, atol=1e-9)

    def test_deterministic(self, small_network, precond):
        """Identical seeds give identical parameters after several steps."""
        digests = []
        for _ in range(2):
            state = _state(small_network, precond, seed=4)
            train_teacher(state, _sampler().sample, steps=5, log_every=0)
            digests.append(state.params.digest())
        assert digests[0] == digests[1]

    def test_history_and_checkpoint_hook(self, small_network, precond):
        """Records every log_every steps; the hook fires every checkpoint_every."""
        state = _state(small_network, precond)
        seen = []
        train_teacher(state, _sampler().sample, steps=4, log_every=2,
                      on_checkpoint=lambda s: seen.append(s.step), checkpoint_every=3)
        assert [r["step"] for r in state.history] == [2, 4]
        assert all(np.isfinite(r["loss"]) for r in state.history)
        assert seen == [3]

    def test_non_finite_batch(self, small_network, precond):
        """A NaN target raises TrainingDivergedError and leaves parameters untouched."""
        state = _state(small_network, precond)
        batch = _sampler().sample(Rng(1))
        batch.x0[0, 0, 0] = np.nan
        before = state.params.digest()
        with pytest.raises(TrainingDivergedError):
            train_step(state, batch)
        assert state.params.digest() == before
        assert state.step == 0

    @pytest.mark.slow
    def test_loss_halves_on_synthetic_data(self, small_network, precond):
        """500 steps cut the loss by at least half (early vs late moving average)."""
        state = _state(small_network, precond, seed=2, lr=1e-3)
        losses = []
        for _ in range(500):
            train_step(state, _sampler().sample(state.rng))
            losses.append(state.last_loss)
        early, late = np.mean(losses[:10]), np.mean(losses[-50:])
        assert late <= 0.5 * early, f"early={early:.4f} late={late:.4f}"


@pytest.mark.slow
class TestTeacherMatchesAnalyticDenoiser:
    """A teacher trained on scalar Gaussian data approaches the posterior mean."""

    def test_mean_error_on_grid(self):
        """Mean |D - D*| over x in [-3, 3], t in [epsilon, 10] is at most 0.05."""
        spec = GaussianSpec(mu=0.0, sigma_d=1.0)
        config = preset("tiny", mel_bins=1, cond_dim=0)
        precond = Precond(sigma_data=1.0)
        rng = Rng(0)
        state = TrainState.create(init_denoiser_params(config, rng), config, precond, rng)
        train_teacher(state, GaussianBatchSampler(spec, batch_size=16, mel_bins=1, frames=8).sample,
                      steps=5000, log_every=0)

        denoiser = NetworkDenoiser(state.params, config, precond)
        x = Rng(1).permutation(np.linspace(-3.0, 3.0, 25)).reshape(1, 25)
        errors = []
        for t in np.geomspace(precond.epsilon, 10.0, 20):
            out = denoiser(Tensor(x), float(t)).data
            errors.append(np.abs(out - analytic_denoiser(x, t, spec)))
        assert np.mean(errors) <= 0.05
