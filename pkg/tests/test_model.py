import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import field_sum_mp
from soundfield_ot.model import (CoefficientVector, DimensionError, PlaneWaveDictionary, Region,
                                 SensorArray, field_at, field_grid, field_pressure,
                                 steering_vector, uniform_directions, wavenumber)

finite = st.floats(-2.0, 2.0, allow_nan=False)
point = st.tuples(finite, finite)


def random_dictionary(rng, L, f=1000.0):
    d = np.sort(rng.uniform(-np.pi, np.pi, L))
    return PlaneWaveDictionary(f, d)


class TestWavenumber:
    # frozen from 30-digit evaluation of 2*pi*f/c
    def test_one_kilohertz(self):
        assert wavenumber(1000.0, 343.0) == pytest.approx(18.3183245107276574, rel=1e-15)
        assert wavenumber(1000.0, 343.0) == 2 * np.pi * 1000.0 / 343.0

    def test_inverse_constructed(self):
        assert wavenumber(343.0 / (2 * np.pi), 343.0) == pytest.approx(1.0, rel=1e-15)

    def test_one_and_a_half_kilohertz(self):
        assert wavenumber(1500.0, 343.0) == pytest.approx(27.4774867660914861, rel=1e-15)

    @pytest.mark.parametrize("f, c", [(0.0, 343.0), (-1.0, 343.0), (1000.0, 0.0), (1.0, -5.0)])
    def test_non_positive_rejected(self, f, c):
        with pytest.raises(ValueError):
            wavenumber(f, c)


class TestDictionary:
    def test_uniform_directions(self):
        d = uniform_directions(4)
        np.testing.assert_allclose(d, [-np.pi, -np.pi / 2, 0.0, np.pi / 2])

    def test_wavenumber_recomputable(self):
        d = PlaneWaveDictionary.uniform(1234.5, 7, speed_of_sound_mps=340.0)
        assert d.wavenumber_radpm == 2 * np.pi * 1234.5 / 340.0
        assert d.size == 7

    @pytest.mark.parametrize("dirs", [[0.1, 0.1], [0.5, 0.2], [np.pi], [-4.0], []])
    def test_invalid_directions(self, dirs):
        with pytest.raises(ValueError):
            PlaneWaveDictionary(1000.0, np.array(dirs, dtype=float))

    def test_coefficient_length_checked(self):
        d = PlaneWaveDictionary.uniform(1000.0, 5)
        with pytest.raises(DimensionError):
            field_pressure(d, np.ones(4), (0.0, 0.0))
        with pytest.raises(DimensionError):
            CoefficientVector(np.ones(4)).check(d)


class TestSensorArray:
    def test_circular_positions(self):
        arr = SensorArray.circular(9, 0.25)
        q = np.arange(9)
        expected = 0.25 * np.stack([np.cos(2 * np.pi * q / 9), np.sin(2 * np.pi * q / 9)], 1)
        np.testing.assert_allclose(arr.positions_m, expected, atol=1e-16)

    def test_rejects_empty_and_nonfinite(self):
        with pytest.raises(ValueError):
            SensorArray(np.zeros((0, 2)))
        with pytest.raises(ValueError):
            SensorArray(np.array([[np.nan, 0.0]]))


class TestSteeringVector:
    def test_origin_is_all_ones(self):
        d = PlaneWaveDictionary.uniform(1000.0, 12)
        np.testing.assert_array_equal(steering_vector(d, (0.0, 0.0)), np.ones(12))

    def test_half_turn(self):
        d = PlaneWaveDictionary(343.0 / (2 * np.pi), np.array([0.0]))
        g = steering_vector(d, (np.pi, 0.0))
        assert g[0] == pytest.approx(-1.0, abs=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(L=st.integers(1, 40), r=point, seed=st.integers(0, 2**32 - 1))
    def test_unit_modulus(self, L, r, seed):
        d = random_dictionary(np.random.default_rng(seed), L)
        g = steering_vector(d, r)
        np.testing.assert_allclose(np.abs(g), 1.0, atol=1e-14)


class TestFieldPressure:
    def test_single_term(self):
        d = PlaneWaveDictionary.uniform(1000.0, 6)
        e1 = np.zeros(6, dtype=complex)
        e1[1] = 1.0
        r = np.array([0.13, -0.07])
        n1 = np.array([np.cos(d.directions_rad[1]), np.sin(d.directions_rad[1])])
        expected = np.exp(-1j * d.wavenumber_radpm * n1 @ r)
        assert field_pressure(d, e1, r) == pytest.approx(expected, abs=1e-15)

    def test_zero_coefficients(self):
        d = PlaneWaveDictionary.uniform(1000.0, 6)
        assert field_pressure(d, np.zeros(6), (0.3, 0.2)) == 0.0

    def test_matches_extended_precision_sum(self):
        rng = np.random.default_rng(11)
        d = random_dictionary(rng, 3)
        alpha = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        pts = rng.uniform(-1.0, 1.0, (20, 2))
        got = field_at(d, alpha, pts)
        for r, g in zip(pts, got):
            ref = field_sum_mp(d.directions_rad, alpha, d.wavenumber_radpm, r)
            assert abs(g - ref) <= 1e-13 * max(1.0, abs(ref))

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), r=point,
           a=st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False),
           b=st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False))
    def test_linearity(self, seed, r, a, b):
        rng = np.random.default_rng(seed)
        d = random_dictionary(rng, 8)
        x1 = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        x2 = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        lhs = field_pressure(d, a * x1 + b * x2, r)
        rhs = a * field_pressure(d, x1, r) + b * field_pressure(d, x2, r)
        scale = abs(a) * np.abs(x1).sum() + abs(b) * np.abs(x2).sum() + 1e-300
        assert abs(lhs - rhs) <= 1e-12 * scale

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), r=point, shift=point, l=st.integers(0, 9))
    def test_plane_wave_translation(self, seed, r, shift, l):
        d = random_dictionary(np.random.default_rng(seed), 10)
        e = np.zeros(10, dtype=complex)
        e[l] = 1.0
        n = np.array([np.cos(d.directions_rad[l]), np.sin(d.directions_rad[l])])
        moved = field_pressure(d, e, np.add(r, shift))
        here = field_pressure(d, e, r)
        factor = np.exp(-1j * d.wavenumber_radpm * n @ np.asarray(shift))
        assert abs(moved - here * factor) <= 1e-12


class TestFieldGrid:
    def test_single_cell(self):
        d = PlaneWaveDictionary.uniform(1000.0, 5)
        alpha = np.arange(5) + 1j
        reg = Region(0.0, 0.2, -0.1, 0.3)
        F = field_grid(d, alpha, reg, (1, 1))
        assert F.shape == (1, 1)
        assert F[0, 0] == pytest.approx(field_pressure(d, alpha, (0.1, 0.1)), abs=1e-14)

    def test_zero_coefficients(self):
        d = PlaneWaveDictionary.uniform(1000.0, 5)
        F = field_grid(d, np.zeros(5), Region.centered_square(0.6), (4, 3))
        assert F.shape == (4, 3) and not F.any()

    def test_three_by_three_matches_pointwise(self):
        d = PlaneWaveDictionary.uniform(1000.0, 5)
        alpha = np.zeros(5, dtype=complex)
        alpha[2] = 0.7 - 0.2j
        reg = Region(-0.3, 0.3, -0.15, 0.45)
        F = field_grid(d, alpha, reg, (3, 3))
        xs = [-0.2, 0.0, 0.2]
        ys = [-0.05, 0.15, 0.35]
        for i, x in enumerate(xs):
            for j, y in enumerate(ys):
                assert F[i, j] == pytest.approx(field_pressure(d, alpha, (x, y)), abs=1e-14)

    def test_empty_region(self):
        with pytest.raises(ValueError):
            Region(0.0, 0.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            Region.centered_square(0.6).cell_centers(0, 3)

    def test_chunked_evaluation_is_consistent(self):
        d = PlaneWaveDictionary.uniform(1000.0, 50)
        alpha = np.random.default_rng(2).standard_normal(50).astype(complex)
        pts = Region.centered_square(0.6).grid_points(190, 190)
        whole = field_at(d, alpha, pts)
        np.testing.assert_allclose(whole[:100], d.steering_matrix(pts[:100]) @ alpha,
                                   rtol=0, atol=1e-12)
