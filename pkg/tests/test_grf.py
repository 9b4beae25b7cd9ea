"""Gaussian-random-field sampling and spline interpolation tests."""

import numpy as np
import pytest

from symode.grf import (
    GrfConfig,
    ParamFunction,
    constant_param,
    fit_spline,
    rbf_covariance,
    sample_grf,
)


def cfg(**kw):
    base = dict(mean=0.0, length_scale=0.5, output_scale=1.0, n_samples=32, t_span=(0.0, 1.0))
    base.update(kw)
    return GrfConfig(**base)


class TestSampleGrf:
    def test_zero_output_scale_gives_zeros(self):
        values = sample_grf(cfg(output_scale=0.0, mean=3.0), seed=123)
        assert np.all(values == 0.0)

    def test_deterministic_per_seed(self):
        a = sample_grf(cfg(), seed=42)
        b = sample_grf(cfg(), seed=42)
        assert np.array_equal(a, b)
        c = sample_grf(cfg(), seed=43)
        assert not np.array_equal(a, c)

    def test_huge_length_scale_collapses_to_constant(self):
        values = sample_grf(cfg(mean=5.0, length_scale=1e6, n_samples=128), seed=7)
        assert np.abs(values - np.median(values)).max() < 1e-2

    def test_scaling_linearity(self):
        v1 = sample_grf(cfg(output_scale=1.5), seed=11)
        v2 = sample_grf(cfg(output_scale=3.0), seed=11)
        assert np.allclose(2.0 * v1, v2, rtol=1e-12)

    def test_empirical_covariance_matches_kernel(self):
        c = cfg(length_scale=0.3, n_samples=16)
        i, j = 4, 7
        times = np.linspace(0.0, 1.0, 16)
        expected = float(rbf_covariance(times, 0.3)[i, j])
        draws = np.array([sample_grf(c, seed=s) for s in range(2500)])
        centered = draws - draws.mean(axis=0)
        emp = float(np.mean(centered[:, i] * centered[:, j]))
        assert abs(emp - expected) / abs(expected) < 0.10

    def test_config_validation(self):
        with pytest.raises(ValueError):
            cfg(length_scale=0.0)
        with pytest.raises(ValueError):
            cfg(n_samples=3)
        with pytest.raises(ValueError):
            cfg(t_span=(1.0, 0.0))


class TestSpline:
    def test_constant_values_everywhere(self):
        t = np.linspace(0, 1, 8)
        pf = fit_spline(t, np.full(8, 2.5))
        probe = np.linspace(0, 1, 101)
        assert np.abs(pf(probe) - 2.5).max() < 1e-14

    def test_reproduces_linear_functions(self):
        t = np.linspace(0, 2, 16)
        pf = fit_spline(t, 3.0 * t - 1.0)
        probe = np.linspace(0, 2, 301)
        assert np.abs(pf(probe) - (3.0 * probe - 1.0)).max() < 1e-12

    def test_sine_interpolation_error_bound(self):
        # natural boundary is exact for sin(2 pi t) on [0, 1]; the O(h^4)
        # bound with h = 1/63 keeps the mid-interval error below 1e-5
        t = np.linspace(0, 1, 64)
        pf = fit_spline(t, np.sin(2 * np.pi * t))
        mids = 0.5 * (t[:-1] + t[1:])
        assert np.abs(pf(mids) - np.sin(2 * np.pi * mids)).max() < 1e-5

    def test_exact_at_knots(self):
        rng = np.random.default_rng(0)
        t = np.linspace(0, 1, 12)
        v = rng.standard_normal(12)
        pf = fit_spline(t, v)
        assert np.abs(pf(t) - v).max() < 1e-12

    def test_c2_continuity_at_interior_knots(self):
        # each spline piece is an exact cubic, so fitting four points inside
        # a piece recovers it exactly; compare one-sided limits at the knots
        rng = np.random.default_rng(1)
        t = np.linspace(0, 1, 10)
        pf = fit_spline(t, rng.standard_normal(10))
        h = 0.02

        def side_cubic(tk, sign):
            pts = tk + sign * h * np.arange(1, 5)
            return np.polyfit(pts - tk, pf(pts), 3)

        for tk in t[1:-1]:
            left, right = side_cubic(tk, -1.0), side_cubic(tk, +1.0)
            assert abs(left[3] - right[3]) < 1e-9   # value
            assert abs(left[2] - right[2]) < 1e-8   # first derivative
            assert abs(2 * left[1] - 2 * right[1]) < 1e-6  # second derivative

    def test_rejects_non_ascending_times(self):
        t = np.array([0.0, 0.5, 0.4, 1.0])
        with pytest.raises(ValueError):
            fit_spline(t, np.zeros(4))

    def test_clamps_outside_span(self):
        t = np.linspace(0, 1, 8)
        v = np.linspace(2, 4, 8)
        pf = fit_spline(t, v)
        assert pf(-0.5) == pytest.approx(v[0])
        assert pf(1.5) == pytest.approx(v[-1])

    def test_evaluation_continuous(self):
        rng = np.random.default_rng(2)
        pf = fit_spline(np.linspace(0, 1, 8), rng.standard_normal(8))
        t0 = 0.37
        for eps in (1e-4, 1e-6, 1e-8):
            assert abs(pf(t0 + eps) - pf(t0)) < 10 * eps * 50 + 1e-12

    def test_constant_param_exact(self):
        pf = constant_param(1.0, (0.0, 1.0))
        probe = np.linspace(-0.2, 1.2, 57)
        assert np.abs(pf(probe) - 1.0).max() < 1e-15

    def test_vector_evaluation_matches_scalar(self):
        rng = np.random.default_rng(3)
        pf = fit_spline(np.linspace(0, 1, 8), rng.standard_normal(8))
        probe = np.array([0.1, 0.33, 0.87])
        vec = pf(probe)
        assert np.allclose(vec, [pf(float(t)) for t in probe])
