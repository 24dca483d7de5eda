"""Field representation, norms, point evaluation, and the local metric."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eulergibbs.spectral import (
    SpectralField,
    cross_period_distance,
    energy,
    enstrophy,
    evaluate,
    evaluate_grid,
    is_positive,
    local_distance,
    mode_box,
    mode_count,
    sobolev_norm,
)

from conftest import random_field

TWO_PI = 2.0 * math.pi


class TestModeBookkeeping:
    def test_positivity_examples(self):
        assert is_positive((1, -5))
        assert is_positive((0, 3))
        assert not is_positive((0, -3))
        assert not is_positive((0, 0))
        assert not is_positive((-1, 2))

    def test_mode_box_1_1(self):
        assert mode_box((1, 1)) == ((0, 1), (1, -1), (1, 0), (1, 1))

    def test_mode_box_2_1_length(self):
        assert len(mode_box((2, 1))) == 2 * 3 + 1

    def test_zero_cutoff_rejected(self):
        with pytest.raises(ValueError):
            mode_box((1, 0))
        with pytest.raises(ValueError):
            mode_box((0, 4))

    @given(st.integers(1, 8), st.integers(1, 8))
    def test_mode_box_formula_and_order(self, n1, n2):
        box = mode_box((n1, n2))
        assert len(box) == mode_count((n1, n2)) == n1 * (2 * n2 + 1) + n2
        assert all(is_positive(k) for k in box)
        assert list(box) == sorted(box)
        assert len(set(box)) == len(box)

    @given(st.integers(-9, 9), st.integers(-9, 9))
    def test_half_lattice_partition(self, k1, k2):
        # exactly one of k, -k is positive unless k = 0
        if (k1, k2) == (0, 0):
            assert not is_positive((k1, k2))
        else:
            assert is_positive((k1, k2)) != is_positive((-k1, -k2))


class TestFieldConstruction:
    def test_wrong_length_rejected(self):
        with pytest.raises(ValueError):
            SpectralField(TWO_PI, (2, 2), np.zeros(3, dtype=complex))

    def test_bad_period_rejected(self):
        with pytest.raises(ValueError):
            SpectralField(0.0, (1, 1), np.zeros(4, dtype=complex))
        with pytest.raises(ValueError):
            SpectralField(-1.0, (1, 1), np.zeros(4, dtype=complex))

    def test_from_modes_rejects_outside_box(self):
        with pytest.raises(ValueError):
            SpectralField.from_modes(TWO_PI, (2, 2), {(3, 0): 1.0})
        with pytest.raises(ValueError):
            SpectralField.from_modes(TWO_PI, (2, 2), {(0, -1): 1.0})

    def test_coefficients_read_only(self):
        f = SpectralField.zeros(TWO_PI, (2, 2))
        with pytest.raises(ValueError):
            f.coeffs[0] = 1.0

    def test_arithmetic_and_equality(self, rng):
        f = random_field(rng, TWO_PI, (3, 3))
        g = random_field(rng, TWO_PI, (3, 3))
        assert f + g - g == f or np.allclose((f + g - g).coeffs, f.coeffs)
        assert (2.0 * f).coeffs == pytest.approx(2.0 * f.coeffs)
        h = random_field(rng, TWO_PI, (2, 3))
        with pytest.raises(ValueError):
            _ = f + h


class TestSobolevNorms:
    def test_unit_mode_order_minus_two(self):
        f = SpectralField.from_modes(TWO_PI, (2, 2), {(1, 0): 1.0})
        assert sobolev_norm(f, -2.0) == pytest.approx(1.0, rel=1e-14)

    def test_second_mode_order_minus_two(self):
        f = SpectralField.from_modes(TWO_PI, (2, 2), {(2, 0): 1.0})
        assert sobolev_norm(f, -2.0) == pytest.approx(0.25, rel=1e-14)

    def test_scaling_homogeneity(self, rng):
        f = random_field(rng, 3.5, (4, 4))
        for beta in (-2.0, -0.5, 0.0, 1.0, 2.0):
            assert sobolev_norm(2.5 * f, beta) == pytest.approx(
                2.5 * sobolev_norm(f, beta), rel=1e-12
            )

    def test_zero_iff_zero_field(self):
        z = SpectralField.zeros(4.0, (3, 3))
        assert sobolev_norm(z, 1.3) == 0.0

    def test_order_monotonicity_on_unit_torus(self, rng):
        # with L = 2 pi every occupied symbol is >= 1, so norms grow with the order
        f = random_field(rng, TWO_PI, (5, 5))
        values = [sobolev_norm(f, beta) for beta in (-2.0, -1.0, 0.0, 1.0, 2.0)]
        assert values == sorted(values)


class TestEnergyEnstrophy:
    def test_energy_examples(self):
        f = SpectralField.from_modes(TWO_PI, (2, 2), {(1, 0): 1.0})
        assert energy(f) == pytest.approx(1.0, rel=1e-14)
        g = SpectralField.from_modes(TWO_PI, (2, 2), {(1, 1): 2.0})
        assert energy(g) == pytest.approx(8.0, rel=1e-14)

    def test_enstrophy_examples(self):
        f = SpectralField.from_modes(TWO_PI, (2, 2), {(1, 0): 1.0})
        assert enstrophy(f) == pytest.approx(1.0, rel=1e-14)
        g = SpectralField.from_modes(TWO_PI, (2, 2), {(1, 1): 2.0})
        assert enstrophy(g) == pytest.approx(16.0, rel=1e-14)

    def test_enstrophy_period_doubling(self, rng):
        f = random_field(rng, TWO_PI, (4, 4))
        g = SpectralField(2 * TWO_PI, f.cutoff, f.coeffs)
        assert enstrophy(g) == pytest.approx(enstrophy(f) / 16.0, rel=1e-12)

    def test_norm_consistency(self, rng):
        f = random_field(rng, 5.0, (4, 4))
        assert energy(f) == pytest.approx(sobolev_norm(f, 1.0) ** 2, rel=1e-12)
        assert enstrophy(f) == pytest.approx(sobolev_norm(f, 2.0) ** 2, rel=1e-12)


class TestEvaluate:
    def test_zero_field(self):
        z = SpectralField.zeros(TWO_PI, (2, 2))
        assert evaluate(z, (0.3, 1.7)) == 0.0

    def test_cosine_example(self):
        f = SpectralField.from_modes(TWO_PI, (1, 1), {(1, 0): 0.5})
        for x1 in (0.0, 0.7, 2.0, 5.5):
            assert evaluate(f, (x1, 0.9)) == pytest.approx(
                math.cos(x1) / TWO_PI, abs=1e-15
            )

    def test_periodicity(self, rng):
        f = random_field(rng, 3.0, (3, 3))
        x = np.array([0.4, 1.1])
        shifted = x + np.array([3.0, -6.0])
        assert evaluate(f, x) == pytest.approx(evaluate(f, shifted), rel=1e-12, abs=1e-13)

    def test_batch_matches_scalar(self, rng):
        f = random_field(rng, TWO_PI, (3, 3))
        pts = rng.uniform(0.0, TWO_PI, size=(7, 2))
        batch = evaluate(f, pts)
        for value, p in zip(batch, pts):
            assert value == pytest.approx(evaluate(f, p), rel=1e-13, abs=1e-14)

    def test_grid_matches_pointwise(self, rng):
        f = random_field(rng, 2.0, (3, 2))
        x1 = np.array([0.1, 0.9, 1.5])
        x2 = np.array([0.2, 1.8])
        grid = evaluate_grid(f, x1, x2)
        for i, a in enumerate(x1):
            for j, b in enumerate(x2):
                assert grid[i, j] == pytest.approx(evaluate(f, (a, b)), rel=1e-12, abs=1e-14)

    def test_parseval(self, rng):
        # uniform quadrature with more than 4x the cutoff resolves |phi|^2 exactly
        for cutoff in ((3, 3), (5, 2)):
            f = random_field(rng, TWO_PI, cutoff)
            m = 4 * max(cutoff) + 1
            xs = TWO_PI * np.arange(m) / m
            values = evaluate_grid(f, xs, xs)
            quad = (TWO_PI / m) ** 2 * float(np.sum(values * values))
            exact = 2.0 * float(np.sum(np.abs(f.coeffs) ** 2))
            assert quad == pytest.approx(exact, rel=1e-10)

    def test_derivative_grid_symbol(self, rng):
        # |D|^2 acts as -Laplacian: compare against direct coefficient weighting
        f = random_field(rng, TWO_PI, (2, 2))
        k1 = np.array([k[0] for k in mode_box(f.cutoff)])
        k2 = np.array([k[1] for k in mode_box(f.cutoff)])
        weighted = f.with_coeffs(f.coeffs * (k1**2 + k2**2))
        xs = np.linspace(0.0, 1.0, 5)
        a = evaluate_grid(f, xs, xs, order=2.0)
        b = evaluate_grid(weighted, xs, xs)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


class TestLocalDistance:
    def test_identity(self, rng):
        f = random_field(rng, TWO_PI, (3, 3))
        assert local_distance(f, f, -1.5, 4) == 0.0

    def test_bounded_below_one(self, rng):
        f = random_field(rng, TWO_PI, (3, 3), scale=50.0)
        g = random_field(rng, TWO_PI, (3, 3), scale=50.0)
        assert local_distance(f, g, 0.5, 6) < 1.0

    def test_monotone_in_level_max(self, rng):
        f = random_field(rng, TWO_PI, (3, 3))
        g = random_field(rng, TWO_PI, (3, 3))
        assert local_distance(f, g, -1.0, 3) <= local_distance(f, g, -1.0, 6)

    def test_symmetry_and_triangle(self, rng):
        f = random_field(rng, TWO_PI, (3, 3))
        g = random_field(rng, TWO_PI, (3, 3))
        h = random_field(rng, TWO_PI, (3, 3))
        dfg = local_distance(f, g, -1.5, 4)
        assert dfg == pytest.approx(local_distance(g, f, -1.5, 4), rel=1e-12)
        assert dfg <= local_distance(f, h, -1.5, 4) + local_distance(h, g, -1.5, 4) + 1e-12

    def test_period_mismatch_rejected(self, rng):
        f = random_field(rng, TWO_PI, (2, 2))
        g = random_field(rng, 2 * TWO_PI, (2, 2))
        with pytest.raises(ValueError):
            local_distance(f, g, -1.5, 4)

    def test_mixed_cutoffs_embed(self, rng):
        f = random_field(rng, TWO_PI, (3, 3))
        g = random_field(rng, TWO_PI, (2, 2))
        d = local_distance(f, g, -1.5, 4)
        assert 0.0 < d < 1.0

    def test_cross_period_agrees_on_equal_periods(self, rng):
        f = random_field(rng, TWO_PI, (3, 3))
        g = random_field(rng, TWO_PI, (3, 3))
        a = local_distance(f, g, -1.5, 4)
        b = cross_period_distance(f, g, -1.5, 4)
        assert a == pytest.approx(b, rel=1e-9, abs=1e-12)

    def test_cross_period_identity_on_shared_content(self):
        # same physical field represented on two tori: distance should be small,
        # limited only by the different tails, which are absent here
        f = SpectralField.from_modes(4.0, (2, 2), {(1, 0): 1.0})
        g = SpectralField.from_modes(8.0, (4, 4), {(2, 0): 2.0})
        # on [0,4]^2 both represent (2/4) cos(2 pi x1 / 4): mode (2,0) at L=8 has
        # the same frequency 1/4 and e_k carries 1/L, so doubling the coefficient
        # compensates the halved basis amplitude
        assert cross_period_distance(f, g, 0.0, 4) == pytest.approx(0.0, abs=1e-12)

    def test_invalid_quadrature_args(self, rng):
        f = random_field(rng, TWO_PI, (2, 2))
        with pytest.raises(ValueError):
            local_distance(f, f, 0.0, 0)
        with pytest.raises(ValueError):
            local_distance(f, f, 0.0, 4, points_per_unit=0)


class TestSerialization:
    def test_round_trip_bitwise(self, rng):
        f = random_field(rng, 3.25, (3, 2))
        rec = f.to_record()
        text = json.dumps(rec)
        g = SpectralField.from_record(json.loads(text))
        assert g.period == f.period
        assert g.cutoff == f.cutoff
        assert np.array_equal(g.coeffs, f.coeffs)

    def test_record_order_is_lexicographic(self, rng):
        f = random_field(rng, TWO_PI, (2, 2))
        modes = [tuple(row[:2]) for row in f.to_record()["coeffs"]]
        assert modes == sorted(modes)
        assert modes == list(mode_box((2, 2)))

    def test_record_rejects_permuted_modes(self, rng):
        f = random_field(rng, TWO_PI, (1, 1))
        rec = f.to_record()
        rec["coeffs"][0], rec["coeffs"][1] = rec["coeffs"][1], rec["coeffs"][0]
        with pytest.raises(ValueError):
            SpectralField.from_record(rec)

    def test_record_rejects_wrong_count(self, rng):
        f = random_field(rng, TWO_PI, (1, 1))
        rec = f.to_record()
        rec["coeffs"] = rec["coeffs"][:-1]
        with pytest.raises(ValueError):
            SpectralField.from_record(rec)
