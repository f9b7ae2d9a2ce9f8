"""
Tests for teacher ODE sampling and student consistency sampling.
"""

import numpy as np
import pytest

from src.diffusion.oracle import (
    GaussianConsistency,
    GaussianDenoiser,
    GaussianSpec,
    analytic_consistency,
    analytic_trajectory,
)
from src.diffusion.sampler import record_trajectory, sample_student, sample_teacher
from src.diffusion.schedule import karras_grid
from src.errors import NonFiniteError, ScheduleError
from src.numcore.rng import Rng
from src.numcore.tensor import Tensor

SPEC = GaussianSpec(mu=0.0, sigma_d=1.0)
SHAPE = (1, 256)


class _Exploding:
    """Denoiser whose output overflows after a few calls."""

    def __init__(self, after: int):
        self.after = after
        self.nfe = 0

    def __call__(self, x, t, cond=None):
        self.nfe += 1
        if self.nfe > self.after:
            return Tensor(np.full(x.shape, np.nan))
        return Tensor(np.zeros(x.shape))

    def reset_nfe(self):
        self.nfe = 0


def _terminal_error(n_steps: int, seed: int = 0) -> float:
    grid = karras_grid(n_steps)
    x_top = grid.t_max * Rng(seed).normal(SHAPE)
    exact = analytic_trajectory(x_top, grid.t_max, grid.epsilon, SPEC)
    sample = sample_teacher(GaussianDenoiser(SPEC), None, grid, Rng(seed), shape=SHAPE)
    return float(np.mean(np.abs(sample - exact)))


@pytest.mark.unit
class TestTeacherSampling:
    """Tests for the ODE sampler."""

    def test_euler_nfe_is_n(self):
        """Euler makes exactly N denoiser calls."""
        d = GaussianDenoiser(SPEC)
        sample_teacher(d, None, karras_grid(50), Rng(0), shape=SHAPE)
        assert d.nfe == 50

    def test_heun_nfe(self):
        """Heun makes 2N - 1 calls (no correction on the final step)."""
        d = GaussianDenoiser(SPEC)
        sample_teacher(d, None, karras_grid(50), Rng(0), solver="heun", shape=SHAPE)
        assert d.nfe == 99

    def test_trajectory_snapshots(self):
        """N + 1 snapshots from t_max down to epsilon."""
        grid = karras_grid(12)
        with record_trajectory() as traj:
            sample_teacher(GaussianDenoiser(SPEC), None, grid, Rng(0), shape=SHAPE, trajectory=traj)
        assert len(traj) == 13
        assert traj.times[0] == grid.t_max
        assert traj.times[-1] == grid.epsilon
        assert all(a > b for a, b in zip(traj.times, traj.times[1:]))

    def test_recording_disabled(self):
        """A disabled recorder yields None."""
        with record_trajectory(enabled=False) as traj:
            assert traj is None

    def test_deterministic_in_seed(self):
        """Same seed, same sample."""
        grid = karras_grid(10)
        a = sample_teacher(GaussianDenoiser(SPEC), None, grid, Rng(3), shape=SHAPE)
        b = sample_teacher(GaussianDenoiser(SPEC), None, grid, Rng(3), shape=SHAPE)
        np.testing.assert_array_equal(a, b)

    def test_euler_first_order_convergence(self):
        """Doubling N roughly halves the terminal error."""
        errors = {n: _terminal_error(n) for n in (10, 20, 40)}
        for n in (10, 20):
            ratio = errors[n] / errors[2 * n]
            assert 1.5 <= ratio <= 2.5, f"N={n}: ratio {ratio:.3f}, errors {errors}"

    def test_heun_more_accurate_than_euler(self):
        """At equal N, Heun lands closer to the exact endpoint."""
        grid = karras_grid(18)
        x_top = grid.t_max * Rng(5).normal(SHAPE)
        exact = analytic_trajectory(x_top, grid.t_max, grid.epsilon, SPEC)
        euler = sample_teacher(GaussianDenoiser(SPEC), None, grid, Rng(5), shape=SHAPE)
        heun = sample_teacher(GaussianDenoiser(SPEC), None, grid, Rng(5), solver="heun", shape=SHAPE)
        assert np.mean(np.abs(heun - exact)) < np.mean(np.abs(euler - exact))

    def test_unknown_solver(self):
        """Only euler and heun exist."""
        with pytest.raises(ValueError):
            sample_teacher(GaussianDenoiser(SPEC), None, karras_grid(5), Rng(0), solver="rk4", shape=SHAPE)

    def test_shape_required_without_cond(self):
        """Without cond the output shape must be given."""
        with pytest.raises(ValueError):
            sample_teacher(GaussianDenoiser(SPEC), None, karras_grid(5), Rng(0))

    def test_non_finite_state_names_step(self):
        """A NaN state raises NonFiniteError naming the step."""
        with pytest.raises(NonFiniteError, match="step 3"):
            sample_teacher(_Exploding(after=3), None, karras_grid(10), Rng(0), shape=SHAPE)


@pytest.mark.unit
class TestStudentSampling:
    """Tests for one-step and multi-step consistency sampling."""

    @pytest.mark.parametrize("steps", [1, 2, 4])
    def test_nfe_equals_steps(self, steps):
        """Exactly ``steps`` evaluations."""
        f = GaussianConsistency(SPEC, 0.002)
        sample_student(f, None, steps, karras_grid(50), Rng(0), shape=SHAPE)
        assert f.nfe == steps

    def test_one_step_is_consistency_of_noise(self):
        """One step returns f(t_max z, t_max)."""
        grid = karras_grid(50)
        f = GaussianConsistency(SPEC, grid.epsilon)
        out = sample_student(f, None, 1, grid, Rng(9), shape=SHAPE)
        x_top = grid.t_max * Rng(9).normal(SHAPE)
        np.testing.assert_allclose(out, analytic_consistency(x_top, grid.t_max, SPEC, grid.epsilon))

    def test_multi_step_levels(self):
        """Re-noising visits the sub-grid levels, ending at epsilon."""
        grid = karras_grid(50)
        with record_trajectory() as traj:
            sample_student(GaussianConsistency(SPEC, grid.epsilon), None, 4, grid, Rng(0), shape=SHAPE, trajectory=traj)
        expected = [grid[i] for i in (50, 38, 25, 12)] + [grid.epsilon]
        np.testing.assert_allclose(traj.times, expected)

    def test_exact_consistency_samples_data_distribution(self):
        """With the exact consistency function, samples have the data std."""
        grid = karras_grid(50)
        out = sample_student(GaussianConsistency(SPEC, grid.epsilon), None, 2, grid, Rng(1), shape=(1, 20_000))
        assert np.std(out) == pytest.approx(1.0, abs=0.03)
        assert np.mean(out) == pytest.approx(0.0, abs=0.03)

    @pytest.mark.parametrize("steps", [0, 51])
    def test_steps_out_of_range(self, steps):
        """steps outside [1, N] raise ScheduleError."""
        with pytest.raises(ScheduleError):
            sample_student(GaussianConsistency(SPEC, 0.002), None, steps, karras_grid(50), Rng(0), shape=SHAPE)

    def test_non_finite_output(self):
        """A NaN output raises NonFiniteError."""
        with pytest.raises(NonFiniteError):
            sample_student(_Exploding(after=0), None, 1, karras_grid(10), Rng(0), shape=SHAPE)
