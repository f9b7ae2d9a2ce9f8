"""
Tests for the closed-form Gaussian denoiser, trajectory and consistency
function.
"""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from src.diffusion.oracle import (
    GaussianConsistency,
    GaussianDenoiser,
    GaussianSpec,
    analytic_consistency,
    analytic_denoiser,
    analytic_solver_step,
    analytic_trajectory,
)
from src.errors import ScheduleError
from src.numcore.rng import Rng
from src.numcore.tensor import Tensor

SPEC = GaussianSpec(mu=0.7, sigma_d=1.3)
EPSILON = 0.002


@pytest.mark.unit
class TestAnalyticDenoiser:
    """Tests for the posterior mean."""

    def test_limits(self):
        """D*(x, 0) = x and D*(x, t) -> mu as t grows."""
        x = np.array([-2.0, 0.0, 3.0])
        np.testing.assert_allclose(analytic_denoiser(x, 0.0, SPEC), x)
        np.testing.assert_allclose(analytic_denoiser(x, 1e6, SPEC), np.full(3, 0.7), atol=1e-6)

    def test_matches_empirical_posterior_mean(self):
        """E[x0 | x_t] estimated by binning agrees with the formula."""
        rng = Rng(0)
        t = 1.0
        x0 = SPEC.sample(rng, (1_000_000,))
        x_t = x0 + t * rng.normal((1_000_000,))
        near = np.abs(x_t - 1.5) < 0.02
        assert x0[near].mean() == pytest.approx(float(analytic_denoiser(1.5, t, SPEC)), abs=0.04)

    def test_per_item_levels(self):
        """One level per leading item broadcasts over the remaining axes."""
        x = np.ones((2, 3, 4))
        out = analytic_denoiser(x, np.array([0.5, 2.0]), SPEC)
        np.testing.assert_allclose(out[0], analytic_denoiser(np.ones((3, 4)), 0.5, SPEC))
        np.testing.assert_allclose(out[1], analytic_denoiser(np.ones((3, 4)), 2.0, SPEC))


@pytest.mark.unit
class TestAnalyticTrajectory:
    """Tests for the probability-flow ODE solution."""

    def test_matches_numerical_integration(self):
        """Closed form equals a tight RK45 solution of dx/dt = (x - D*)/t."""
        x_start = np.array([-40.0, 3.0, 75.0])

        def rhs(t, x):
            return (x - analytic_denoiser(x, t, SPEC)) / t

        sol = solve_ivp(rhs, (80.0, 0.05), x_start, rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(analytic_trajectory(x_start, 80.0, 0.05, SPEC), sol.y[:, -1], rtol=1e-6)

    def test_identity_at_start(self):
        """x(t_start) = x_start."""
        x = np.array([1.0, -1.0])
        np.testing.assert_allclose(analytic_trajectory(x, 3.0, 3.0, SPEC), x)

    def test_solver_step_composes(self):
        """Two exact steps equal one exact step."""
        x = np.array([5.0])
        two = analytic_solver_step(analytic_solver_step(x, 10.0, 2.0, SPEC), 2.0, 0.1, SPEC)
        np.testing.assert_allclose(two, analytic_solver_step(x, 10.0, 0.1, SPEC))

    def test_non_positive_time(self):
        """The trajectory is only defined for t > 0."""
        with pytest.raises(ScheduleError):
            analytic_trajectory(np.ones(2), 1.0, 0.0, SPEC)


@pytest.mark.unit
class TestAnalyticConsistency:
    """Tests for the consistency function."""

    def test_identity_at_epsilon(self):
        """f(x, eps) = x exactly."""
        x = Rng(1).normal((5,))
        out = analytic_consistency(x, EPSILON, SPEC, EPSILON)
        np.testing.assert_array_equal(out, x)

    def test_constant_along_trajectory(self):
        """Points of one trajectory map to the same output."""
        x_top = np.array([12.0, -30.0])
        outputs = [
            analytic_consistency(analytic_trajectory(x_top, 80.0, t, SPEC), t, SPEC, EPSILON)
            for t in (80.0, 10.0, 1.0, 0.1)
        ]
        for out in outputs[1:]:
            np.testing.assert_allclose(out, outputs[0], rtol=1e-10)

    def test_below_epsilon(self):
        """Levels below epsilon are rejected."""
        with pytest.raises(ScheduleError):
            analytic_consistency(np.ones(2), 0.001, SPEC, EPSILON)

    def test_mixed_boundary_levels(self):
        """Per-item levels: items at epsilon pass through unchanged."""
        x = np.array([[2.0, 3.0], [2.0, 3.0]])
        out = analytic_consistency(x, np.array([EPSILON, 5.0]), SPEC, EPSILON)
        np.testing.assert_array_equal(out[0], x[0])
        assert not np.allclose(out[1], x[1])


@pytest.mark.unit
class TestOracleDenoisers:
    """Tests for the callable wrappers."""

    def test_denoiser_counts_evaluations(self):
        """Each call increments nfe; reset_nfe clears it."""
        d = GaussianDenoiser(SPEC)
        out = d(Tensor(np.zeros(3)), 1.0)
        d(Tensor(np.zeros(3)), 2.0)
        assert isinstance(out, Tensor)
        assert d.nfe == 2
        d.reset_nfe()
        assert d.nfe == 0

    def test_consistency_wrapper(self):
        """GaussianConsistency wraps analytic_consistency."""
        f = GaussianConsistency(SPEC, EPSILON)
        x = np.array([4.0, -4.0])
        np.testing.assert_allclose(f(Tensor(x), 3.0).data, analytic_consistency(x, 3.0, SPEC, EPSILON))
        assert f.nfe == 1

    def test_spec_validation(self):
        """sigma_d must be positive."""
        with pytest.raises(ValueError):
            GaussianSpec(sigma_d=0.0)
