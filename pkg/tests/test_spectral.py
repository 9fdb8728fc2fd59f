import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kpilab.spectral import (
    Field2D,
    Grid1D,
    Grid2D,
    SpectralField,
    ZeroFrequencyError,
    ZeroModeError,
    dealias,
    dx,
    dx_inv,
    dy,
    kp_group_velocity,
    kp_symbol,
    l2_norm_grid,
    l2_norm_spectral,
    linear_propagator,
    to_physical,
    to_spectral,
)

from conftest import random_zero_mean_field


def single_mode(grid, kx, ky):
    X, Y = grid.mesh()
    xi = 2 * math.pi * kx / grid.gx.length
    eta = 2 * math.pi * ky / grid.gy.length
    return to_spectral(Field2D(grid, np.cos(xi * X + eta * Y))), xi, eta


class TestSymbol:
    def test_plane_wave_frequency(self):
        lam = 2.0
        assert kp_symbol(lam, math.sqrt(3) * lam**2) == pytest.approx(4 * lam**3, rel=1e-14)

    def test_pure_x_mode(self):
        assert kp_symbol(1.0, 0.0) == 1.0

    def test_arithmetic(self):
        assert kp_symbol(1.5, 2.25) == pytest.approx(1.5**3 + 2.25**2 / 1.5, rel=1e-15)
        assert kp_symbol(1.5, 2.25) == pytest.approx(6.75)

    def test_zero_frequency_rejected(self):
        with pytest.raises(ZeroFrequencyError):
            kp_symbol(0.0, 1.0)
        with pytest.raises(ZeroFrequencyError):
            kp_group_velocity(np.array([1.0, 0.0]), np.array([1.0, 1.0]))

    def test_group_velocity_zero_x_component(self):
        vx, vy = kp_group_velocity(3.0, math.sqrt(3) * 9.0)
        assert abs(vx) <= 1e-12 * 9
        assert vy == pytest.approx(2 * math.sqrt(3) * 3, rel=1e-14)

    def test_group_velocity_mirrored_branches(self):
        # 2 eta / xi is even under (xi, eta) -> (-xi, -eta); the downward
        # branch is eta -> -eta
        vx, vy = kp_group_velocity(-1.0, -math.sqrt(3))
        assert abs(vx) <= 1e-12
        assert vy == pytest.approx(2 * math.sqrt(3), rel=1e-14)
        vx, vy = kp_group_velocity(1.0, -math.sqrt(3))
        assert abs(vx) <= 1e-12
        assert vy == pytest.approx(-2 * math.sqrt(3), rel=1e-14)

    def test_kdv_mode(self):
        assert kp_group_velocity(1.0, 0.0) == (3.0, 0.0)

    @given(st.floats(0.1, 50), st.floats(-50, 50))
    def test_gradient_matches_central_difference(self, xi, eta):
        h = 1e-6 * max(1.0, abs(xi))
        gx = (kp_symbol(xi + h, eta) - kp_symbol(xi - h, eta)) / (2 * h)
        gy = (kp_symbol(xi, eta + h) - kp_symbol(xi, eta - h)) / (2 * h)
        vx, vy = kp_group_velocity(xi, eta)
        scale = 1.0 + abs(xi) ** 2 + (eta / xi) ** 2
        assert abs(vx - gx) <= 1e-5 * scale
        assert abs(vy - gy) <= 1e-5 * (1 + abs(eta / xi))


class TestGrid:
    @pytest.mark.parametrize("n", [4, 7, 12, 100])
    def test_rejects_bad_sizes(self, n):
        with pytest.raises(ValueError):
            Grid1D(n, 1.0)

    def test_rejects_nonpositive_length(self):
        with pytest.raises(ValueError):
            Grid1D(16, 0.0)

    def test_field_shape_and_finiteness(self, grid):
        with pytest.raises(ValueError):
            Field2D(grid, np.zeros((3, 3)))
        bad = np.zeros(grid.shape)
        bad[0, 0] = np.nan
        with pytest.raises(ValueError):
            Field2D(grid, bad)


class TestTransforms:
    def test_round_trip(self, grid, rng):
        u = random_zero_mean_field(grid, rng)
        back = to_physical(to_spectral(u))
        assert np.max(np.abs(back.values - u.values)) <= 1e-12 * np.max(np.abs(u.values))

    def test_parseval(self, grid, rng):
        u = random_zero_mean_field(grid, rng)
        assert l2_norm_spectral(to_spectral(u)) == pytest.approx(l2_norm_grid(u), rel=1e-10)

    def test_hermitian_mode_lookup(self, grid):
        f, _, _ = single_mode(grid, 3, 2)
        assert f.mode(-3, -2) == pytest.approx(np.conj(f.mode(3, 2)))
        assert abs(f.mode(3, 2)) == pytest.approx(0.5)


class TestDerivatives:
    def test_dx_single_mode(self, grid):
        f, xi, _ = single_mode(grid, 2, 0)
        assert dx(f).mode(2, 0) == pytest.approx(1j * xi * f.mode(2, 0))

    def test_dx_third_order_phase(self):
        g = Grid2D(Grid1D(16, 2 * math.pi), Grid1D(8, 2 * math.pi))
        f, _, _ = single_mode(g, 1, 0)
        assert dx(f, 3).mode(1, 0) == pytest.approx(-1j * f.mode(1, 0))

    def test_compose_vs_direct(self, zero_mean):
        a = dx(dx(zero_mean, 1), 2).coeffs
        b = dx(zero_mean, 3).coeffs
        assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(b))

    def test_order_must_be_positive(self, zero_mean):
        with pytest.raises(ValueError):
            dx(zero_mean, 0)
        with pytest.raises(ValueError):
            dx_inv(zero_mean, 0)

    def test_dy_mode(self):
        g = Grid2D(Grid1D(16, 2 * math.pi), Grid1D(16, 2 * math.pi))
        f, _, _ = single_mode(g, 1, 3)
        assert dy(f, 2).mode(1, 3) == pytest.approx(-9 * f.mode(1, 3))

    def test_dy_of_x_only_field_vanishes(self, grid):
        f, _, _ = single_mode(grid, 4, 0)
        assert np.max(np.abs(dy(f).coeffs)) == 0.0

    def test_dy2_matches_centered_differences(self):
        g = Grid2D(Grid1D(64, 2 * math.pi), Grid1D(1024, 2 * math.pi))
        X, Y = g.mesh()
        u = np.cos(2 * X + 3 * Y) + 0.5 * np.sin(X - 2 * Y)
        exact = to_physical(dy(to_spectral(Field2D(g, u)), 2)).values
        h = g.gy.spacing
        fd = (np.roll(u, -1, 0) - 2 * u + np.roll(u, 1, 0)) / h**2
        assert np.max(np.abs(fd - exact)) / np.max(np.abs(exact)) <= 1e-4
        # second-order scheme: error / h^2 is the 4th derivative over 12
        assert np.max(np.abs(fd - exact)) <= (81 / 12 + 16 / 24) * h**2 * 1.01


class TestAntiderivative:
    def test_inverts_dx(self, zero_mean):
        a = dx_inv(dx(zero_mean), 1).coeffs
        assert np.max(np.abs(a - zero_mean.coeffs)) <= 1e-13 * np.max(np.abs(zero_mean.coeffs))

    def test_dx_inverts_dx_inv(self, zero_mean):
        a = dx(dx_inv(zero_mean, 1)).coeffs
        assert np.max(np.abs(a - zero_mean.coeffs)) <= 1e-13 * np.max(np.abs(zero_mean.coeffs))

    def test_second_order_multiplier(self):
        g = Grid2D(Grid1D(16, 2 * math.pi), Grid1D(8, 2 * math.pi))
        f, _, _ = single_mode(g, 4, 1)
        assert dx_inv(f, 2).mode(4, 1) == pytest.approx(-f.mode(4, 1) / 16)

    def test_nonzero_mean_rejected(self, grid, zero_mean):
        bad = zero_mean.coeffs.copy()
        bad[0, 0] = 1.0
        with pytest.raises(ZeroModeError):
            dx_inv(type(zero_mean)(grid, bad))

    def test_tolerance_is_relative(self, grid, zero_mean):
        c = zero_mean.coeffs.copy()
        c[1, 0] = 1e-12 * np.max(np.abs(c))
        dx_inv(type(zero_mean)(grid, c))


class TestPropagator:
    def test_identity_at_zero_time(self, zero_mean):
        assert np.array_equal(linear_propagator(zero_mean, 0.0).coeffs, zero_mean.coeffs)

    def test_plane_wave_phase(self):
        lam = 2.0
        g = Grid2D(Grid1D(16, 2 * math.pi), Grid1D(16, 2 * math.pi / (math.sqrt(3) * lam**2)))
        f, xi, eta = single_mode(g, 2, 1)
        t = 0.37
        assert xi == lam and eta == pytest.approx(math.sqrt(3) * lam**2)
        got = linear_propagator(f, t).mode(2, 1)
        assert got == pytest.approx(f.mode(2, 1) * np.exp(1j * 4 * lam**3 * t), abs=1e-13)

    def test_plane_wave_is_an_orbit(self):
        lam, t = 3.0, 0.25
        g = Grid2D(Grid1D(32, 2 * math.pi), Grid1D(16, 2 * math.pi / (math.sqrt(3) * lam**2)))
        X, Y = g.mesh()
        u = Field2D(g, np.cos(lam * X + math.sqrt(3) * lam**2 * Y))
        got = to_physical(linear_propagator(to_spectral(u), t)).values
        want = np.cos(lam * X + 4 * lam**3 * t + math.sqrt(3) * lam**2 * Y)
        assert np.max(np.abs(got - want)) <= 1e-12

    def test_group_property(self, zero_mean):
        back = linear_propagator(linear_propagator(zero_mean, 0.8), -0.8).coeffs
        assert np.max(np.abs(back - zero_mean.coeffs)) <= 1e-12 * np.max(np.abs(zero_mean.coeffs))

    @settings(max_examples=25, deadline=None)
    @given(st.floats(-10, 10))
    def test_l2_conserved(self, t):
        rng = np.random.default_rng(7)
        g = Grid2D(Grid1D(32, 2 * math.pi), Grid1D(16, 2 * math.pi))
        f = to_spectral(random_zero_mean_field(g, rng))
        assert l2_norm_spectral(linear_propagator(f, t)) == pytest.approx(l2_norm_spectral(f), rel=1e-12)

    def test_rejects_nonzero_mean(self, grid, zero_mean):
        c = zero_mean.coeffs.copy()
        c[0, 0] = 1.0
        with pytest.raises(ZeroModeError):
            linear_propagator(type(zero_mean)(grid, c), 0.1)


class TestDealias:
    def test_low_modes_unchanged(self, grid):
        c = np.zeros(grid.spectral_shape, dtype=complex)
        c[3, 5] = 1.0 + 2.0j
        c[-4, 2] = 0.5
        f = SpectralField(grid, c)
        assert np.array_equal(dealias(f).coeffs, c)

    def test_top_mode_zeroed(self, grid):
        c = np.zeros(grid.spectral_shape, dtype=complex)
        c[0, grid.gx.n // 2 - 1] = 1.0
        c[grid.gy.n // 2 - 1, 1] = 1.0
        assert np.max(np.abs(dealias(SpectralField(grid, c)).coeffs)) == 0.0

    def test_boundary_of_the_band(self, grid):
        keep = np.zeros(grid.spectral_shape, dtype=complex)
        keep[0, grid.gx.n // 3] = 1.0
        drop = np.zeros(grid.spectral_shape, dtype=complex)
        drop[0, grid.gx.n // 3 + 1] = 1.0
        assert l2_norm_spectral(dealias(SpectralField(grid, keep))) > 0
        assert l2_norm_spectral(dealias(SpectralField(grid, drop))) == 0

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_norm_never_increases(self, seed):
        rng = np.random.default_rng(seed)
        g = Grid2D(Grid1D(16, 1.0), Grid1D(16, 1.0))
        f = to_spectral(Field2D(g, rng.normal(size=g.shape)))
        assert l2_norm_spectral(dealias(f)) <= l2_norm_spectral(f) * (1 + 1e-15)
