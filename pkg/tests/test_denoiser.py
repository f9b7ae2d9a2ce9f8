"""
Tests for the WaveNet denoiser and its preconditioned wrapper.
"""

import numpy as np
import pytest

from src.diffusion.schedule import Precond, precond_coeffs
from src.errors import ConfigMismatchError, ScheduleError, ShapeError
from src.models.denoiser import (
    NetworkDenoiser,
    WaveNetConfig,
    check_params,
    denoise,
    init_denoiser_params,
    preset,
    sinusoidal_embedding,
)
from src.numcore.rng import Rng
from src.numcore.tensor import Tensor

FRAMES = 24


def _inputs(config, seed=0, frames=FRAMES, batch=None):
    rng = Rng(seed)
    lead = () if batch is None else (batch,)
    x = Tensor(rng.normal(lead + (config.mel_bins, frames)))
    cond = Tensor(rng.normal(lead + (frames, config.cond_dim))) if config.conditioned else None
    return x, cond


@pytest.mark.unit
class TestBoundaryCondition:
    """D(x, epsilon, cond) returns x bit-for-bit."""

    def test_random_draws(self, small_network, small_params, precond):
        """1000 random inputs and conditions at t = epsilon."""
        rng = Rng(42)
        for _ in range(1000):
            x = rng.normal((small_network.mel_bins, 6)) * rng.uniform(0.1, 50.0)
            cond = Tensor(rng.normal((6, small_network.cond_dim)))
            out = denoise(small_params, small_network, Tensor(x), precond.epsilon, cond, precond)
            np.testing.assert_array_equal(out.data, x)

    def test_batched_per_item_levels(self, small_network, small_params, precond):
        """Items at epsilon are exact even when batched with other levels."""
        x, cond = _inputs(small_network, batch=3)
        t = np.array([precond.epsilon, 1.0, precond.epsilon])
        out = denoise(small_params, small_network, x, t, cond, precond).data
        np.testing.assert_array_equal(out[0], x.data[0])
        np.testing.assert_array_equal(out[2], x.data[2])
        assert not np.array_equal(out[1], x.data[1])

    @pytest.mark.slow
    def test_full_preset(self, precond):
        """Same guarantee for the full-size network."""
        config = preset("full")
        rng = Rng(3)
        params = init_denoiser_params(config, rng)
        params["output/kernel"].data = 0.05 * rng.normal(params["output/kernel"].shape)
        x, cond = _inputs(config, frames=16)
        out = denoise(params, config, x, precond.epsilon, cond, precond)
        np.testing.assert_array_equal(out.data, x.data)


@pytest.mark.unit
class TestForward:
    """Shapes, conditioning and time handling."""

    def test_output_shape(self, small_network, small_params, precond):
        """Output matches the input mel shape, batched or not."""
        for batch in (None, 2):
            x, cond = _inputs(small_network, batch=batch)
            assert denoise(small_params, small_network, x, 0.7, cond, precond).shape == x.shape

    def test_zero_init_is_skip_only(self, small_network, precond):
        """Before training F = 0, so D = c_skip x."""
        params = init_denoiser_params(small_network, Rng(0))
        x, cond = _inputs(small_network)
        c_skip = precond_coeffs(2.0, precond)[0]
        out = denoise(params, small_network, x, 2.0, cond, precond)
        np.testing.assert_allclose(out.data, float(c_skip) * x.data)

    def test_per_item_levels_match_separate_calls(self, small_network, small_params, precond):
        """A batch with per-item t equals one call per item."""
        x, cond = _inputs(small_network, batch=2)
        t = np.array([0.3, 12.0])
        batched = denoise(small_params, small_network, x, t, cond, precond).data
        for i in range(2):
            single = denoise(small_params, small_network, Tensor(x.data[i]), t[i], Tensor(cond.data[i]), precond)
            np.testing.assert_allclose(batched[i], single.data, rtol=1e-10, atol=1e-12)

    def test_conditioning_changes_output(self, small_network, small_params, precond):
        """Different cond, different prediction."""
        x, cond = _inputs(small_network)
        other = Tensor(cond.data + 1.0)
        a = denoise(small_params, small_network, x, 1.0, cond, precond).data
        b = denoise(small_params, small_network, x, 1.0, other, precond).data
        assert not np.allclose(a, b)

    def test_non_causal_receptive_field(self, small_network, small_params, precond):
        """A change at one frame reaches frames on both sides, within the dilation radius."""
        x, cond = _inputs(small_network)
        bumped = x.data.copy()
        bumped[:, 10] += 1.0
        a = denoise(small_params, small_network, x, 1.0, cond, precond).data
        b = denoise(small_params, small_network, Tensor(bumped), 1.0, cond, precond).data
        changed = np.flatnonzero(np.any(np.abs(a - b) > 1e-12, axis=0))
        radius = sum(small_network.dilation(i) for i in range(small_network.n_layers))
        assert changed.min() < 10 < changed.max()
        assert changed.min() >= 10 - radius
        assert changed.max() <= 10 + radius

    def test_unconditioned_network(self, precond):
        """cond_dim = 0 runs without a cond matrix."""
        config = WaveNetConfig(n_layers=2, residual_channels=4, cond_dim=0, mel_bins=1, time_embed_dim=4)
        params = init_denoiser_params(config, Rng(0))
        x = Tensor(np.ones((1, 8)))
        assert denoise(params, config, x, 1.0, None, precond).shape == (1, 8)


@pytest.mark.unit
class TestInputValidation:
    """Errors raised before any computation."""

    def test_wrong_mel_bins(self, small_network, small_params, precond):
        """Input with the wrong number of mel bins."""
        _, cond = _inputs(small_network)
        with pytest.raises(ShapeError):
            denoise(small_params, small_network, Tensor(np.zeros((5, FRAMES))), 1.0, cond, precond)

    def test_cond_frame_mismatch(self, small_network, small_params, precond):
        """Cond frames must equal mel frames."""
        x, _ = _inputs(small_network)
        with pytest.raises(ShapeError):
            denoise(small_params, small_network, x, 1.0, Tensor(np.zeros((FRAMES + 1, 6))), precond)

    def test_cond_dim_mismatch(self, small_network, small_params, precond):
        """Cond width must equal cond_dim."""
        x, _ = _inputs(small_network)
        with pytest.raises(ShapeError):
            denoise(small_params, small_network, x, 1.0, Tensor(np.zeros((FRAMES, 7))), precond)

    def test_missing_cond(self, small_network, small_params, precond):
        """A conditioned network requires cond."""
        x, _ = _inputs(small_network)
        with pytest.raises(ShapeError):
            denoise(small_params, small_network, x, 1.0, None, precond)

    @pytest.mark.parametrize("t", [0.001, 81.0])
    def test_level_out_of_range(self, small_network, small_params, precond, t):
        """t outside [epsilon, t_max] raises ScheduleError."""
        x, cond = _inputs(small_network)
        with pytest.raises(ScheduleError):
            denoise(small_params, small_network, x, t, cond, precond)

    def test_per_item_level_count(self, small_network, small_params, precond):
        """Per-item levels must match the batch size."""
        x, cond = _inputs(small_network, batch=2)
        with pytest.raises(ShapeError):
            denoise(small_params, small_network, x, np.array([1.0, 2.0, 3.0]), cond, precond)


@pytest.mark.unit
class TestParameters:
    """Parameter layout and configuration checks."""

    def test_check_params_mismatch(self, small_network, small_params):
        """Parameters for one config are rejected by another."""
        check_params(small_params, small_network)
        other = WaveNetConfig(n_layers=3, residual_channels=4, cond_dim=6, mel_bins=4, time_embed_dim=8)
        with pytest.raises(ConfigMismatchError):
            check_params(small_params, other)

    def test_init_is_deterministic(self, small_network):
        """Same seed, same parameters."""
        a = init_denoiser_params(small_network, Rng(5))
        b = init_denoiser_params(small_network, Rng(5))
        assert a.digest() == b.digest()

    def test_presets(self):
        """Preset shapes and overrides."""
        assert preset("tiny").n_layers == 4
        assert preset("full").residual_channels == 256
        assert preset("tiny", mel_bins=16).mel_bins == 16
        with pytest.raises(ValueError):
            preset("huge")

    @pytest.mark.parametrize("kwargs", [{"kernel_size": 4}, {"time_embed_dim": 7}, {"n_layers": 0}, {"cond_dim": -1}])
    def test_invalid_config(self, kwargs):
        """Degenerate configurations are rejected."""
        with pytest.raises(ValueError):
            WaveNetConfig(**kwargs)


@pytest.mark.unit
class TestTimeEmbedding:
    """Tests for the sinusoidal embedding."""

    def test_layout(self):
        """First half sines, second half cosines; c = 0 gives [0..., 1...]."""
        emb = sinusoidal_embedding(0.0, 8)
        np.testing.assert_array_equal(emb, [0, 0, 0, 0, 1, 1, 1, 1])
        emb = sinusoidal_embedding(0.5, 4)
        np.testing.assert_allclose(emb, [np.sin(0.5), np.sin(0.005), np.cos(0.5), np.cos(0.005)])

    def test_batched(self):
        """B levels give a (B, dim) matrix."""
        assert sinusoidal_embedding(np.array([0.1, 0.2, 0.3]), 6).shape == (3, 6)

    def test_odd_dimension(self):
        """Odd dimensions are rejected."""
        with pytest.raises(ShapeError):
            sinusoidal_embedding(0.1, 5)


@pytest.mark.unit
class TestNetworkDenoiser:
    """Tests for the callable wrapper."""

    def test_counts_evaluations(self, small_network, small_params, precond):
        """nfe increments per call and resets."""
        d = NetworkDenoiser(small_params, small_network, precond)
        x, cond = _inputs(small_network)
        d(x, 1.0, cond)
        d(x, 2.0, cond)
        assert d.nfe == 2
        d.reset_nfe()
        assert d.nfe == 0

    def test_output_shape_from_cond(self, small_network, small_params):
        """Mel shape inferred from a cond matrix."""
        d = NetworkDenoiser(small_params, small_network, Precond())
        assert d.output_shape(Tensor(np.zeros((10, 6)))) == (4, 10)
        assert d.output_shape(Tensor(np.zeros((3, 10, 6)))) == (3, 4, 10)
