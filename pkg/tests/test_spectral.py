"""Spectral operator tests: wavenumbers, derivatives, inverse Laplacian,
temporal derivatives, dealiasing, and resampling."""

import numpy as np
import pytest

from symode.spectral import (
    Grid,
    dealias,
    dealias_mask,
    fourier_resample,
    inverse_laplacian_2d,
    spectral_derivative,
    spectral_derivative_adjoint,
    stream_gradient,
    temporal_derivative,
    wavenumber_grid,
)


class TestGrid:
    def test_spacing_excludes_endpoint(self):
        g = Grid.line(8, 2.0)
        assert g.spacing == (0.25,)
        x = g.axis_coords(0)
        assert x[0] == 0.0 and x[-1] == pytest.approx(2.0 - 0.25)

    def test_rejects_odd_or_tiny_axes(self):
        with pytest.raises(ValueError):
            Grid.line(7, 1.0)
        with pytest.raises(ValueError):
            Grid.line(2, 1.0)
        with pytest.raises(ValueError):
            Grid(shape=(8,), lengths=(-1.0,))

    def test_rejects_three_dimensions(self):
        with pytest.raises(ValueError):
            Grid(shape=(8, 8, 8), lengths=(1.0, 1.0, 1.0))


class TestWavenumbers:
    def test_unit_spacing_two_pi_domain(self):
        (k,) = wavenumber_grid(Grid.line(4, 2 * np.pi))
        assert np.allclose(k, [0.0, 1.0, -2.0, -1.0])

    def test_unit_length_scales_by_two_pi(self):
        # derived from the previous case by the 2*pi/L scaling
        (k,) = wavenumber_grid(Grid.line(4, 1.0))
        assert np.allclose(k, [0.0, 2 * np.pi, -4 * np.pi, -2 * np.pi])

    def test_signed_ordering_above_nyquist(self):
        (k,) = wavenumber_grid(Grid.line(8, 2 * np.pi))
        assert k[5] == pytest.approx(-3.0)

    def test_rejects_zero_dimensional_grid(self):
        with pytest.raises(ValueError):
            wavenumber_grid(Grid.for_ode())


class TestSpectralDerivative:
    def test_sin_3x_first_derivative(self):
        g = Grid.line(32, 2 * np.pi)
        x = g.axis_coords(0)
        df = spectral_derivative(np.sin(3 * x), g, (1,))
        assert np.abs(df - 3 * np.cos(3 * x)).max() < 1e-10

    def test_2d_second_derivative(self):
        g = Grid.square(32, 2 * np.pi)
        x, y = g.meshgrid()
        f = np.sin(x) * np.sin(y)
        d2 = spectral_derivative(f, g, (2, 0))
        assert np.abs(d2 + f).max() < 1e-10

    def test_fourth_derivative_unit_domain(self):
        # analytic: d^4/dx^4 sin(2 pi x) = (2 pi)^4 sin(2 pi x)
        g = Grid.line(64, 1.0)
        x = g.axis_coords(0)
        d4 = spectral_derivative(np.sin(2 * np.pi * x), g, (4,))
        expected = (2 * np.pi) ** 4 * np.sin(2 * np.pi * x)
        assert np.abs(d4 - expected).max() < 1e-7 * (2 * np.pi) ** 4

    def test_rejects_total_order_above_four(self):
        g = Grid.line(16, 1.0)
        with pytest.raises(ValueError):
            spectral_derivative(np.zeros(16), g, (5,))
        g2 = Grid.square(16, 1.0)
        with pytest.raises(ValueError):
            spectral_derivative(np.zeros((16, 16)), g2, (3, 2))

    def test_rejects_non_finite_input(self):
        g = Grid.line(16, 1.0)
        f = np.zeros(16)
        f[3] = np.nan
        with pytest.raises(ValueError):
            spectral_derivative(f, g, (1,))

    def test_linearity(self):
        g = Grid.line(32, 5.0)
        rng = np.random.default_rng(0)
        f, h = rng.standard_normal(32), rng.standard_normal(32)
        a, b = 2.3, -0.7
        lhs = spectral_derivative(a * f + b * h, g, (2,))
        rhs = a * spectral_derivative(f, g, (2,)) + b * spectral_derivative(h, g, (2,))
        assert np.abs(lhs - rhs).max() < 1e-12 * max(1.0, np.abs(lhs).max())

    def test_first_derivative_twice_equals_second(self):
        g = Grid.line(64, 2 * np.pi)
        x = g.axis_coords(0)
        f = np.sin(3 * x) + 0.5 * np.cos(5 * x)
        once = spectral_derivative(spectral_derivative(f, g, (1,)), g, (1,))
        twice = spectral_derivative(f, g, (2,))
        assert np.abs(once - twice).max() < 1e-9

    def test_round_trip_fft(self):
        rng = np.random.default_rng(1)
        f = rng.standard_normal((16, 16))
        back = np.fft.ifftn(np.fft.fftn(f)).real
        assert np.abs(back - f).max() < 1e-12 * np.abs(f).max()

    def test_real_symmetry_residue_small(self):
        g = Grid.line(64, 2 * np.pi)
        rng = np.random.default_rng(2)
        f = rng.standard_normal(64)
        mult = 1j * wavenumber_grid(g)[0]
        mult[32] = 0.0
        residue = np.abs(np.fft.ifft(mult * np.fft.fft(f)).imag).max()
        assert residue < 1e-10

    def test_batch_axes_broadcast(self):
        g = Grid.line(16, 2 * np.pi)
        x = g.axis_coords(0)
        f = np.stack([np.sin(x), np.cos(2 * x)])
        df = spectral_derivative(f, g, (1,))
        assert np.allclose(df[0], np.cos(x), atol=1e-12)
        assert np.allclose(df[1], -2 * np.sin(2 * x), atol=1e-12)

    def test_adjoint_matches_inner_product(self):
        g = Grid.line(32, 3.0)
        rng = np.random.default_rng(3)
        f, h = rng.standard_normal(32), rng.standard_normal(32)
        for orders in [(1,), (2,), (3,)]:
            lhs = np.dot(spectral_derivative(f, g, orders), h)
            rhs = np.dot(f, spectral_derivative_adjoint(h, g, orders))
            assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


class TestInverseLaplacian:
    def test_sin_sin_halves(self):
        # laplacian(sin x sin y) = -2 sin x sin y, so the solution is f/2
        g = Grid.square(32, 2 * np.pi)
        x, y = g.meshgrid()
        f = np.sin(x) * np.sin(y)
        assert np.abs(inverse_laplacian_2d(f, g) - f / 2).max() < 1e-12

    def test_zero_maps_to_zero(self):
        g = Grid.square(16, 2 * np.pi)
        assert np.all(inverse_laplacian_2d(np.zeros((16, 16)), g) == 0.0)

    def test_sin_2x_quarters(self):
        # laplacian(sin 2x) = -4 sin 2x
        g = Grid.square(32, 2 * np.pi)
        x, _ = g.meshgrid()
        f = np.sin(2 * x)
        assert np.abs(inverse_laplacian_2d(f, g) - f / 4).max() < 1e-12

    def test_laplacian_of_result_recovers_negated_input(self):
        g = Grid.square(32, 2.0)
        rng = np.random.default_rng(4)
        f = dealias(rng.standard_normal((32, 32)), g)
        f -= f.mean()
        sol = inverse_laplacian_2d(f, g)
        lap = spectral_derivative(sol, g, (2, 0)) + spectral_derivative(sol, g, (0, 2))
        assert np.abs(lap + f).max() < 1e-9 * max(1.0, np.abs(f).max())

    def test_output_has_zero_mean(self):
        g = Grid.square(16, 1.0)
        rng = np.random.default_rng(5)
        f = rng.standard_normal((16, 16)) + 3.0
        sol = inverse_laplacian_2d(f, g)
        assert abs(sol.mean()) < 1e-13

    def test_stream_gradient_consistent_with_inverse_laplacian(self):
        g = Grid.square(32, 2.0)
        rng = np.random.default_rng(6)
        s = rng.standard_normal((32, 32))
        s -= s.mean()
        gx, gy = stream_gradient(s, g)
        sol = inverse_laplacian_2d(s, g)
        assert np.abs(gx - spectral_derivative(sol, g, (1, 0))).max() < 1e-10
        assert np.abs(gy - spectral_derivative(sol, g, (0, 1))).max() < 1e-10


class TestTemporalDerivative:
    def test_periodic_sine_spectral(self):
        n = 64
        t = np.arange(n) / n
        s = np.sin(2 * np.pi * t)
        ds = temporal_derivative(s, 1.0 / n, method="spectral")
        assert np.abs(ds - 2 * np.pi * np.cos(2 * np.pi * t)).max() < 1e-9

    @pytest.mark.parametrize("method", ["spectral", "central_fd", "spectral_detrend"])
    def test_constant_series_gives_zeros(self, method):
        s = np.full(16, 3.7)
        ds = temporal_derivative(s, 0.1, method=method)
        assert np.abs(ds).max() < 1e-12

    def test_linear_series_central_fd_exact(self):
        n = 32
        t = np.arange(n) / n
        ds = temporal_derivative(t.copy(), 1.0 / n, method="central_fd")
        assert np.abs(ds - 1.0).max() < 1e-10

    def test_linear_series_detrended_spectral_exact(self):
        n = 32
        t = np.arange(n) / n
        ds = temporal_derivative(2.5 * t + 1.0, 1.0 / n, method="spectral_detrend")
        assert np.abs(ds - 2.5).max() < 1e-10

    def test_rejects_short_series(self):
        with pytest.raises(ValueError):
            temporal_derivative(np.zeros(3), 0.1)

    def test_multidimensional_series(self):
        n = 64
        t = np.arange(n) / n
        s = np.stack([np.sin(2 * np.pi * t), np.cos(4 * np.pi * t)], axis=-1)
        ds = temporal_derivative(s, 1.0 / n, method="spectral")
        assert np.abs(ds[:, 0] - 2 * np.pi * np.cos(2 * np.pi * t)).max() < 1e-9
        assert np.abs(ds[:, 1] + 4 * np.pi * np.sin(4 * np.pi * t)).max() < 1e-8


class TestDealias:
    def test_upper_third_exactly_zero(self):
        # the generator computes products in Fourier space; after masking,
        # the upper third of that spectrum must be exactly zero
        g = Grid.line(32, 1.0)
        rng = np.random.default_rng(7)
        prod = rng.standard_normal(32) * rng.standard_normal(32)
        spec = dealias_mask(g) * np.fft.fft(prod)
        modes = np.abs(np.fft.fftfreq(32, d=1 / 32))
        assert np.abs(spec[modes >= 32 / 3]).max() == 0.0
        # and the physical-space projection only carries roundoff there
        respec = np.fft.fft(dealias(prod, g))
        assert np.abs(respec[modes >= 32 / 3]).max() < 1e-12 * np.abs(prod).max()

    def test_low_modes_untouched(self):
        g = Grid.line(32, 2 * np.pi)
        x = g.axis_coords(0)
        f = np.sin(3 * x)
        assert np.abs(dealias(f, g) - f).max() < 1e-12

    def test_mask_shape_2d(self):
        g = Grid.square(16, 1.0, 2.0)
        mask = dealias_mask(g)
        assert mask.shape == (16, 16)
        assert mask[0, 0]
        assert not mask[8, 0] and not mask[0, 8]


class TestResample:
    def test_band_limited_upsample_exact(self):
        g = Grid.line(16, 2 * np.pi)
        g2 = Grid.line(64, 2 * np.pi)
        x, x2 = g.axis_coords(0), g2.axis_coords(0)
        f = np.sin(3 * x) + 0.2 * np.cos(5 * x)
        up = fourier_resample(f, g, g2)
        expected = np.sin(3 * x2) + 0.2 * np.cos(5 * x2)
        assert np.abs(up - expected).max() < 1e-12

    def test_round_trip_down_up(self):
        g = Grid.line(64, 1.0)
        g_small = Grid.line(16, 1.0)
        x = g.axis_coords(0)
        f = np.sin(2 * np.pi * 3 * x)
        down = fourier_resample(f, g, g_small)
        back = fourier_resample(down, g_small, g)
        assert np.abs(back - f).max() < 1e-12
