"""
Regularizer Tests

Penalties, gradient contributions and split-gradient parts of the
smoothness, sparsity and spatial constraint extensions.
"""

import numpy as np
import pytest
from pydantic import ValidationError

from knmf.diagnostics import fd_check
from knmf.errors import InputError
from knmf.kernels import KernelSpec
from knmf.regularizers import (
    RegularizerSet,
    abundance_terms,
    endmember_terms,
    fluctuation_subgradient,
    fluctuation_terms,
    fold_abundance,
    l2_feature_terms,
    l2_input_terms,
    pixel_coordinates,
    smoothing_matrix,
    sparsity_terms,
    spatial_G,
    spatial_penalty,
    spatial_terms,
    unfold_abundance,
    weighted_average_terms,
)

ALL_KERNELS = [
    KernelSpec.linear(),
    KernelSpec.polynomial(degree=2, offset=0.44),
    KernelSpec.gaussian(sigma=1.2),
]


def brute_force_spatial_penalty(M, alpha, weights, double_sum=True):
    """Spatial penalty evaluated entry by entry from its defining sums."""
    rows, cols = M.shape

    def lower(s):
        return np.array(
            [[alpha ** (p - q) * (1 - alpha) if p >= q else 0.0 for q in range(s)] for p in range(s)]
        )

    right, down = lower(cols), lower(rows)
    left, up = right.T, down.T
    w_l, w_r, w_u, w_d = weights

    def energy(i, j):
        row, col = M[i, :], M[:, j]
        return (
            w_l / cols * np.sum((row - right @ row) ** 2)
            + w_r / cols * np.sum((row - left @ row) ** 2)
            + w_u / rows * np.sum((col - down @ col) ** 2)
            + w_d / rows * np.sum((col - up @ col) ** 2)
        )

    if double_sum:
        return 0.5 * sum(energy(i, j) for i in range(rows) for j in range(cols))
    horizontal = sum(
        w_l / cols * np.sum((M[i] - right @ M[i]) ** 2) + w_r / cols * np.sum((M[i] - left @ M[i]) ** 2)
        for i in range(rows)
    )
    vertical = sum(
        w_u / rows * np.sum((M[:, j] - down @ M[:, j]) ** 2) + w_d / rows * np.sum((M[:, j] - up @ M[:, j]) ** 2)
        for j in range(cols)
    )
    return 0.5 * (horizontal + vertical)


class TestRegularizerSet:
    """Test regularizer configuration."""

    def test_defaults_are_inactive(self):
        """A bare set switches every term off."""
        regs = RegularizerSet()
        assert regs.is_empty
        assert not regs.has_spatial

    def test_rejects_alpha_of_one(self):
        """Weighted-average decay must stay below 1."""
        with pytest.raises(ValidationError):
            RegularizerSet(alpha=1.0)

    def test_rejects_negative_coefficient(self):
        """Coefficients are nonnegative."""
        with pytest.raises(ValidationError):
            RegularizerSet(mu=-0.1)


class TestSmoothingMatrix:
    """Test the weighted-average operator."""

    def test_alpha_zero_is_identity(self):
        """T = I and Q = 0 when alpha = 0."""
        op = smoothing_matrix(0.0, 4)
        np.testing.assert_array_equal(op.T, np.eye(4))
        np.testing.assert_array_equal(op.Q, np.zeros((4, 4)))

    def test_entries(self):
        """alpha^(p-q)(1-alpha) on and below the diagonal."""
        op = smoothing_matrix(0.5, 3)
        np.testing.assert_allclose(op.T, [[0.5, 0, 0], [0.25, 0.5, 0], [0.125, 0.25, 0.5]])

    @pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
    def test_q_symmetric_psd(self, alpha):
        """Q is symmetric with nonnegative spectrum."""
        op = smoothing_matrix(alpha, 7)
        np.testing.assert_allclose(op.Q, op.Q.T, atol=1e-15)
        assert np.linalg.eigvalsh(op.Q).min() >= -1e-12

    def test_alpha_one_rejected(self):
        """alpha >= 1 is an input error."""
        with pytest.raises(InputError):
            smoothing_matrix(1.0, 3)

    def test_split_recombines(self):
        """Q = Q⁺ - Q⁻ with both parts nonnegative."""
        op = smoothing_matrix(0.6, 5)
        q_pos, q_neg = op.split()
        assert (q_pos >= 0).all() and (q_neg >= 0).all()
        np.testing.assert_array_equal(q_pos - q_neg, op.Q)


class TestL2Terms:
    """Test 2-norm smoothness in the input and feature spaces."""

    def test_zero_lambda(self):
        """lambda = 0 contributes nothing."""
        terms = l2_input_terms(np.ones((3, 2)), 0.0)
        assert terms.penalty == 0.0
        assert not terms.gradient.any()

    def test_input_value(self):
        """lambda = 2, e = [1, 2] gives penalty 5 and gradient [2, 4]."""
        terms = l2_input_terms(np.array([[1.0], [2.0]]), 2.0)
        assert terms.penalty == pytest.approx(5.0)
        np.testing.assert_allclose(terms.gradient[:, 0], [2.0, 4.0])
        np.testing.assert_allclose(terms.denominator, terms.gradient)

    def test_input_matches_finite_differences(self):
        """Gradient agrees with the penalty."""
        E = np.random.default_rng(0).random((4, 3))
        err = fd_check(lambda M: l2_input_terms(M, 1.5).penalty, l2_input_terms(E, 1.5).gradient, E, step=1e-4)
        assert err < 1e-8

    def test_feature_gaussian_is_zero(self):
        """Feature-space smoothness is inert under the Gaussian kernel."""
        rng = np.random.default_rng(1)
        for _ in range(100):
            E = rng.random((6, 1))
            terms = l2_feature_terms(E, rng.uniform(0.1, 10.0), KernelSpec.gaussian(rng.uniform(0.2, 3.0)))
            np.testing.assert_array_equal(terms.gradient, 0.0)

    def test_feature_linear_equals_input(self):
        """The linear kernel reproduces the input-space term."""
        E = np.random.default_rng(2).random((5, 3))
        feature = l2_feature_terms(E, 0.8, KernelSpec.linear())
        plain = l2_input_terms(E, 0.8)
        assert feature.penalty == pytest.approx(plain.penalty, rel=1e-14)
        np.testing.assert_allclose(feature.gradient, plain.gradient, rtol=1e-14)

    def test_feature_polynomial_value(self):
        """2 (eᵀe) e = [2, 0] for e = [1, 0]."""
        terms = l2_feature_terms(np.array([[1.0], [0.0]]), 1.0, KernelSpec.polynomial(2, 0.0))
        np.testing.assert_allclose(terms.gradient[:, 0], [2.0, 0.0])

    def test_feature_polynomial_matches_finite_differences(self):
        """Polynomial feature gradient agrees with its penalty."""
        kernel = KernelSpec.polynomial(2, 0.44)
        E = np.random.default_rng(3).uniform(0.1, 1.0, (4, 2))
        err = fd_check(
            lambda M: l2_feature_terms(M, 0.5, kernel).penalty,
            l2_feature_terms(E, 0.5, kernel).gradient,
            E,
            step=1e-6,
        )
        assert err < 1e-6


class TestFluctuation:
    """Test the fluctuation case table."""

    def test_monotone_is_zero(self):
        """No strict interior extremum in a monotone spectrum."""
        np.testing.assert_array_equal(fluctuation_subgradient([0.1, 0.2, 0.5, 0.9], 1.0), 0.0)

    def test_local_maximum(self):
        """Strict local maximum gets -gamma."""
        np.testing.assert_array_equal(fluctuation_subgradient([0, 1, 0], 2.0), [0, -2, 0])

    def test_local_minimum(self):
        """Strict local minimum gets +gamma."""
        np.testing.assert_array_equal(fluctuation_subgradient([1, 0, 1], 2.0), [0, 2, 0])

    def test_ties_and_endpoints(self):
        """Ties and both endpoints contribute zero."""
        np.testing.assert_array_equal(fluctuation_subgradient([1, 1, 0, 0, 2], 3.0), [0, 0, 0, 0, 0])

    def test_split_parts(self):
        """Minima feed the denominator, maxima the numerator."""
        E = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        terms = fluctuation_terms(E, 2.0)
        np.testing.assert_array_equal(terms.denominator[:, 0], [0, 2, 0])
        np.testing.assert_array_equal(terms.numerator[:, 1], [0, 2, 0])
        np.testing.assert_array_equal(terms.denominator - terms.numerator, terms.gradient)

    def test_penalty(self):
        """(gamma/2) sum over l = 2..L-1 of |e_l - e_(l-1)|."""
        E = np.array([[0.0], [1.0], [3.0], [10.0]])
        assert fluctuation_terms(E, 2.0).penalty == pytest.approx(3.0)


class TestWeightedAverage:
    """Test weighted-average smoothness."""

    def test_alpha_zero_penalty(self):
        """T = I makes the penalty vanish."""
        E = np.random.default_rng(4).random((5, 2))
        assert weighted_average_terms(E, 3.0, 0.0).penalty == 0.0

    def test_constant_spectrum_penalized(self):
        """The recursion under-weights the first bands."""
        assert weighted_average_terms(np.ones((6, 1)), 1.0, 0.5).penalty > 0.0

    def test_matches_finite_differences(self):
        """rho Q e_n is the gradient of the penalty."""
        E = np.random.default_rng(5).random((6, 3))
        err = fd_check(
            lambda M: weighted_average_terms(M, 0.9, 0.5).penalty,
            weighted_average_terms(E, 0.9, 0.5).gradient,
            E,
            step=1e-4,
        )
        assert err < 1e-6

    def test_split_recombines(self):
        """Denominator minus numerator is the gradient."""
        E = np.random.default_rng(6).random((5, 2))
        terms = weighted_average_terms(E, 0.7, 0.4)
        np.testing.assert_allclose(terms.denominator - terms.numerator, terms.gradient, atol=1e-15)


class TestSparsity:
    """Test abundance sparsity."""

    def test_zero_mu(self):
        """mu = 0 contributes nothing."""
        terms = sparsity_terms(np.ones((2, 3)), 0.0)
        assert terms.penalty == 0.0
        assert not terms.denominator.any()

    def test_penalty(self):
        """mu sum(A) = 0.5 · 2."""
        assert sparsity_terms(np.eye(2), 0.5).penalty == pytest.approx(1.0)


class TestFold:
    """Test the pixel fold map."""

    def test_round_trip(self):
        """unfold(fold(A, n)) recovers row n exactly."""
        A = np.random.default_rng(7).random((3, 12))
        for n in range(3):
            np.testing.assert_array_equal(unfold_abundance(fold_abundance(A, n, (3, 4))), A[n])

    def test_matches_pixel_coordinates(self):
        """Pixel t lands at i = ceil(t/b), j = t - (i-1)b."""
        A = np.arange(12.0).reshape(1, 12)
        M = fold_abundance(A, 0, (3, 4))
        for t in range(1, 13):
            i, j = pixel_coordinates(t, 4)
            assert M[i - 1, j - 1] == A[0, t - 1]

    def test_shape_mismatch(self):
        """The map must cover every pixel."""
        with pytest.raises(InputError):
            fold_abundance(np.ones((1, 10)), 0, (3, 4))


class TestSpatial:
    """Test the spatial penalty and its gradient."""

    def test_zero_weights(self):
        """All omegas zero give a zero gradient and penalty."""
        M = np.random.default_rng(8).random((3, 4))
        np.testing.assert_array_equal(spatial_G(M, 0.5, 0, 0, 0, 0), 0.0)
        assert spatial_penalty(M, 0.5, 0, 0, 0, 0) == 0.0

    def test_constant_map_alpha_zero(self):
        """A constant map with alpha = 0 is not penalized."""
        M = np.full((4, 5), 0.3)
        np.testing.assert_array_equal(spatial_G(M, 0.0, 1, 1, 1, 1), 0.0)
        assert spatial_penalty(np.random.default_rng(9).random((3, 3)), 0.0, 1, 1, 1, 1) == 0.0

    @pytest.mark.parametrize("double_sum", [True, False])
    def test_gradient_matches_finite_differences(self, double_sum):
        """G is the gradient of R_n on a 4×5 map."""
        M = np.random.default_rng(10).random((4, 5))
        err = fd_check(
            lambda P: spatial_penalty(P, 0.5, 1, 1, 1, 1, double_sum=double_sum),
            spatial_G(M, 0.5, 1, 1, 1, 1, double_sum=double_sum),
            M,
            step=1e-4,
        )
        assert err < 1e-6

    @pytest.mark.parametrize("double_sum", [True, False])
    def test_penalty_matches_brute_force(self, double_sum):
        """Penalty equals the entry-by-entry evaluation of its sums."""
        M = np.array([[1.0, 0.0], [0.0, 1.0]])
        expected = brute_force_spatial_penalty(M, 0.5, (1, 1, 1, 1), double_sum)
        assert spatial_penalty(M, 0.5, 1, 1, 1, 1, double_sum=double_sum) == pytest.approx(expected, rel=1e-12)

    def test_brute_force_on_rectangular_map(self):
        """Row and column operators use b and a respectively."""
        M = np.random.default_rng(11).random((3, 5))
        expected = brute_force_spatial_penalty(M, 0.3, (0.5, 1.0, 2.0, 0.25))
        assert spatial_penalty(M, 0.3, 0.5, 1.0, 2.0, 0.25) == pytest.approx(expected, rel=1e-12)

    def test_constant_map_edges_dominate(self):
        """On a constant 6×6 map the interior gradient is smaller than at the edges."""
        G = np.abs(spatial_G(np.ones((6, 6)), 0.5, 1, 1, 1, 1))
        interior = G[1:-1, 1:-1].max()
        edge = max(G[0].max(), G[-1].max(), G[:, 0].max(), G[:, -1].max())
        assert interior < edge

    def test_terms_split_recombine(self):
        """Spatial denominator minus numerator is the unfolded gradient."""
        A = np.random.default_rng(12).random((2, 12))
        regs = RegularizerSet(omega_l=1, omega_r=0.5, omega_u=2, omega_d=1, alpha_spatial=0.4)
        terms = spatial_terms(A, (3, 4), regs)
        np.testing.assert_allclose(terms.denominator - terms.numerator, terms.gradient, atol=1e-14)
        G0 = spatial_G(fold_abundance(A, 0, (3, 4)), 0.4, 1, 0.5, 2, 1)
        np.testing.assert_allclose(terms.gradient[0], G0.reshape(-1), atol=1e-14)


class TestAggregates:
    """Test the summed endmember and abundance terms."""

    @pytest.mark.parametrize("kernel", ALL_KERNELS, ids=lambda k: k.label)
    def test_denominators_nonnegative(self, kernel):
        """Every multiplicative denominator and numerator part is >= 0 for E, A >= 0."""
        rng = np.random.default_rng(13)
        E, A = rng.random((6, 3)), rng.random((3, 12))
        regs = RegularizerSet(
            lambda_input=0.3, lambda_feature=0.2, gamma=0.1, rho=0.5, alpha=0.5, mu=0.2,
            omega_l=1, omega_r=1, omega_u=1, omega_d=1, alpha_spatial=0.5,
        )
        e_terms = endmember_terms(E, kernel, regs)
        a_terms = abundance_terms(A, regs, (3, 4))
        for part in (e_terms.denominator, e_terms.numerator, a_terms.denominator, a_terms.numerator):
            assert (part >= 0).all()

    def test_spatial_needs_shape(self):
        """Spatial terms without an image shape are rejected."""
        with pytest.raises(InputError):
            abundance_terms(np.ones((2, 4)), RegularizerSet(omega_l=1.0))
