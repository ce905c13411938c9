"""Oracle and property tests for the shared numeric kernels.

Derived expectations are recomputed here by independent routes (exact
polynomial coefficients, fine trapezoid quadrature) rather than calls back
into the library.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from rcdens.numerics import (
    FrequencyGrid,
    HermiteBasis,
    build_frequency_grid,
    ecf,
    gaussian_kernel_weights,
    hermite_function,
    hermite_matrix,
    sieve_fourier_basis,
    weighted_ecf,
)

# Fine quadrature grid for the integral oracles: step 1e-3 on [-20, 20].
_FINE_V = np.linspace(-20.0, 20.0, 40001)

# Frozen: c_5^{-1/2} e^{-1.3^2/2} (32*1.3^5 - 160*1.3^3 + 120*1.3).
_Q5_AT_1P3 = -0.39939146281375065


def _brute_q5(v: float) -> float:
    h5 = 32.0 * v**5 - 160.0 * v**3 + 120.0 * v
    c5 = 2.0**5 * math.factorial(5) * math.sqrt(math.pi)
    return h5 * math.exp(-0.5 * v * v) / math.sqrt(c5)


class TestHermiteFunction:
    def test_order_zero_at_zero(self):
        assert hermite_function(0, 0.0) == pytest.approx(math.pi ** (-0.25), abs=1e-15)

    def test_order_one_at_zero(self):
        assert hermite_function(1, 0.0) == 0.0

    def test_order_five_matches_exact_polynomial(self):
        got = hermite_function(5, 1.3)
        assert got == pytest.approx(_brute_q5(1.3), abs=1e-12)
        assert got == pytest.approx(_Q5_AT_1P3, abs=1e-9)

    def test_matrix_agrees_with_single_orders(self):
        v = np.array([-2.0, -0.3, 0.0, 0.7, 1.9])
        mat = hermite_matrix(8, v)
        for s in range(8):
            np.testing.assert_allclose(mat[:, s], hermite_function(s, v), atol=1e-14)

    def test_orthonormality_up_to_order_twenty(self):
        mat = hermite_matrix(21, _FINE_V)
        gram = integrate.trapezoid(mat[:, :, None] * mat[:, None, :], _FINE_V, axis=0)
        np.testing.assert_allclose(gram, np.eye(21), atol=1e-8)

    def test_rejects_negative_order(self):
        with pytest.raises(ValueError):
            hermite_function(-1, 0.0)


class TestSieveFourierBasis:
    def test_dimension_one_at_zero(self):
        z = sieve_fourier_basis(HermiteBasis(1), 0.0)
        assert z.shape == (1, 1)
        assert z[0, 0] == pytest.approx(math.sqrt(2 * math.pi) * math.pi ** (-0.25), abs=1e-12)
        assert abs(z[0, 0] - 1.8827925275534296) < 1e-12

    def test_second_component_vanishes_at_zero(self):
        z = sieve_fourier_basis(HermiteBasis(2), 0.0)
        assert z[0, 1] == 0.0

    def test_matches_quadrature_fourier_transform(self):
        # Direct transform integral oracle: int exp(i u b) q_s(b) db.
        u = 0.7
        mat = hermite_matrix(4, _FINE_V)
        phase = np.exp(1j * u * _FINE_V)
        oracle = integrate.trapezoid(phase[:, None] * mat, _FINE_V, axis=0)
        got = sieve_fourier_basis(HermiteBasis(4), u)[0]
        np.testing.assert_allclose(got, oracle, atol=1e-6)

    def test_eigenrelation_across_orders_and_points(self):
        pts = np.array([0.0, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0])
        mat = hermite_matrix(11, _FINE_V)
        got = sieve_fourier_basis(HermiteBasis(11), pts)
        for k, u in enumerate(pts):
            phase = np.exp(1j * u * _FINE_V)
            oracle = integrate.trapezoid(phase[:, None] * mat, _FINE_V, axis=0)
            np.testing.assert_allclose(got[k], oracle, atol=1e-6)

    def test_hermitian_in_frequency(self):
        u = np.array([0.3, 1.1, 2.7])
        plus = sieve_fourier_basis(HermiteBasis(9), u)
        minus = sieve_fourier_basis(HermiteBasis(9), -u)
        np.testing.assert_allclose(minus, np.conj(plus), atol=1e-14)


class TestEcf:
    def test_at_zero_is_exactly_one(self):
        assert ecf(np.array([0.3, -1.2, 5.0]), 0.0) == 1.0 + 0.0j

    def test_symmetric_pair_gives_cosine(self):
        a, u = 1.7, 0.9
        assert ecf(np.array([-a, a]), u) == pytest.approx(math.cos(u * a), abs=1e-15)

    def test_degenerate_sample_at_origin(self):
        for u in (0.0, 1.0, -3.3):
            assert ecf(np.array([0.0]), u) == pytest.approx(1.0, abs=1e-15)

    def test_empty_sample_rejected(self):
        with pytest.raises(ValueError, match="empty sample"):
            ecf(np.array([]), 1.0)

    @given(
        st.lists(st.floats(-50, 50), min_size=1, max_size=30),
        st.floats(-10, 10),
    )
    @settings(max_examples=100, deadline=None)
    def test_hermitian_symmetry(self, values, u):
        vals = np.array(values)
        assert abs(ecf(vals, -u) - np.conj(ecf(vals, u))) <= 1e-14

    @given(
        st.lists(st.floats(-50, 50), min_size=1, max_size=30),
        st.floats(-10, 10),
    )
    @settings(max_examples=100, deadline=None)
    def test_modulus_bound(self, values, u):
        assert abs(ecf(np.array(values), u)) <= 1.0 + 1e-12


class TestWeightedEcf:
    def test_uniform_weights_reduce_to_ecf(self):
        vals = np.array([0.4, -2.0, 1.1, 0.0])
        w = np.full(4, 0.25)
        for u in (0.0, 0.8, -2.5):
            assert weighted_ecf(vals, w, u) == pytest.approx(ecf(vals, u), abs=1e-15)

    def test_point_mass_weight(self):
        got = weighted_ecf(np.array([1.0, 2.0]), np.array([1.0, 0.0]), 0.6)
        assert got == pytest.approx(np.exp(0.6j), abs=1e-15)

    def test_two_term_hand_value(self):
        got = weighted_ecf(np.array([0.0, 3.0]), np.array([0.25, 0.75]), 1.0)
        assert got == pytest.approx(0.25 + 0.75 * np.exp(3.0j), abs=1e-15)

    def test_unnormalized_weights_rejected(self):
        with pytest.raises(ValueError, match="unnormalized weights"):
            weighted_ecf(np.array([1.0, 2.0]), np.array([0.6, 0.6]), 1.0)

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError, match="unnormalized weights"):
            weighted_ecf(np.array([1.0, 2.0]), np.array([1.5, -0.5]), 1.0)


class TestGaussianKernelWeights:
    def test_single_anchor(self):
        np.testing.assert_allclose(
            gaussian_kernel_weights(np.array([123.0]), 0.0, 0.5), [1.0]
        )

    def test_symmetric_anchors_symmetric_weights(self):
        w = gaussian_kernel_weights(np.array([-2.0, -0.5, 0.5, 2.0]), 0.0, 0.7)
        np.testing.assert_allclose(w, w[::-1], atol=1e-15)

    def test_two_anchor_hand_value(self):
        w = gaussian_kernel_weights(np.array([0.0, 1.0]), 0.0, 1.0)
        raw = np.array([1.0, math.exp(-0.5)])
        np.testing.assert_allclose(w, raw / raw.sum(), atol=1e-15)
        assert w[0] == pytest.approx(0.6225, abs=5e-5)
        assert w[1] == pytest.approx(0.3775, abs=5e-5)

    def test_far_center_rejected(self):
        with pytest.raises(ValueError, match="empty kernel neighborhood"):
            gaussian_kernel_weights(np.array([0.0, 1.0]), 1e6, 1.0)

    @given(
        st.lists(st.floats(-20, 20), min_size=1, max_size=20),
        st.floats(-20, 20),
        st.floats(0.05, 10),
        st.floats(-100, 100),
    )
    @settings(max_examples=100, deadline=None)
    def test_sum_one_and_translation_invariance(self, anchors, center, h, shift):
        a = np.array(anchors)
        # Keep at least one anchor inside the kernel's float support; total
        # underflow is the documented error case, not a weight vector.
        assume(np.min(np.abs(a - center)) / h < 35.0)
        w = gaussian_kernel_weights(a, center, h)
        assert np.all(w >= 0.0)
        assert abs(w.sum() - 1.0) <= 1e-10
        w_shift = gaussian_kernel_weights(a + shift, center + shift, h)
        np.testing.assert_allclose(w_shift, w, atol=1e-9)


class TestBuildFrequencyGrid:
    def test_reference_grid_shape(self):
        grid = build_frequency_grid(4.0, 101, "standard-normal")
        assert grid.n_nodes == 101
        assert grid.step == pytest.approx(0.08, abs=1e-15)
        assert grid.nodes[50] == 0.0
        assert grid.nodes[-1] == 4.0
        assert grid.is_uniform

    def test_three_point_hand_weights(self):
        grid = build_frequency_grid(1.0, 3, "standard-normal")
        np.testing.assert_allclose(grid.nodes, [-1.0, 0.0, 1.0])
        phi = stats.norm.pdf
        np.testing.assert_allclose(
            grid.weights, [0.5 * phi(1.0), phi(0.0), 0.5 * phi(1.0)], atol=1e-15
        )

    @pytest.mark.parametrize("kind", ["standard-normal", "student-t-3"])
    def test_weight_sum_matches_density_mass(self, kind):
        grid = build_frequency_grid(4.0, 101, kind)
        dens = stats.norm.pdf if kind == "standard-normal" else lambda u: stats.t.pdf(u, 3)
        mass, _ = integrate.quad(dens, -4.0, 4.0)
        assert abs(grid.weights.sum() - mass) < 1e-3

    def test_weights_symmetric(self):
        grid = build_frequency_grid(4.0, 101, "student-t-3")
        np.testing.assert_allclose(grid.weights, grid.weights[::-1], atol=1e-15)

    def test_even_node_count_rejected(self):
        with pytest.raises(ValueError):
            build_frequency_grid(4.0, 100, "standard-normal")

    def test_unknown_weight_kind_rejected(self):
        with pytest.raises(ValueError):
            build_frequency_grid(4.0, 101, "uniform")

    def test_grid_type_validates_center(self):
        with pytest.raises(ValueError):
            FrequencyGrid(
                nodes=np.array([-1.0, 0.1, 1.0]),
                weights=np.ones(3),
                cutoff=1.0,
            )

    def test_grid_type_rejects_nonpositive_weights(self):
        with pytest.raises(ValueError):
            FrequencyGrid(
                nodes=np.array([-1.0, 0.0, 1.0]),
                weights=np.array([1.0, 0.0, 1.0]),
                cutoff=1.0,
            )
