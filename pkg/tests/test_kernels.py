"""
Kernel Tests

Evaluation, gradients, self-gradients and Gram assembly for the linear,
polynomial and Gaussian kernels.
"""

import numpy as np
import pytest
from pydantic import ValidationError
from sklearn.metrics.pairwise import linear_kernel, polynomial_kernel, rbf_kernel

from knmf.diagnostics import fd_check
from knmf.errors import InputError
from knmf.kernels import (
    KernelSpec,
    KernelVariant,
    cross_gram,
    diagonal,
    evaluate,
    gradient,
    gram,
    self_gradient,
    weighted_gradient_sum,
)

ALL_KERNELS = [
    KernelSpec.linear(),
    KernelSpec.polynomial(degree=2, offset=0.44),
    KernelSpec.polynomial(degree=3, offset=1.0),
    KernelSpec.gaussian(sigma=0.8),
]


class TestKernelSpec:
    """Test kernel configuration."""

    def test_defaults_to_linear(self):
        """A bare spec is the linear kernel."""
        assert KernelSpec().variant == KernelVariant.LINEAR

    def test_rejects_nonpositive_sigma(self):
        """Gaussian bandwidth must be positive."""
        with pytest.raises(ValidationError):
            KernelSpec.gaussian(sigma=0.0)

    def test_rejects_negative_offset(self):
        """Polynomial offset must be nonnegative."""
        with pytest.raises(ValidationError):
            KernelSpec.polynomial(degree=2, offset=-0.1)

    def test_rejects_zero_degree(self):
        """Polynomial degree must be at least 1."""
        with pytest.raises(ValidationError):
            KernelSpec.polynomial(degree=0)

    def test_label_and_describe(self):
        """Labels name the variant and its own parameters only."""
        poly = KernelSpec.polynomial(degree=2, offset=0.44)
        assert poly.label == "poly(d=2,c=0.44)"
        assert KernelSpec.gaussian(2.5).describe() == {"variant": "gauss", "sigma": 2.5}
        assert KernelSpec.linear().describe() == {"variant": "linear"}


class TestEvaluate:
    """Test kernel evaluation."""

    def test_linear_dot_product(self):
        """Linear kernel is the dot product."""
        assert evaluate(KernelSpec.linear(), [1, 2], [3, 4]) == 11.0

    def test_gaussian_identical_arguments(self):
        """Gaussian of identical spectra is 1."""
        e = np.array([0.3, 0.7, 0.1])
        assert evaluate(KernelSpec.gaussian(1.0), e, e) == 1.0

    def test_polynomial_value(self):
        """(1 + 1)^2 = 4."""
        assert evaluate(KernelSpec.polynomial(2, 1.0), [1, 0], [1, 0]) == pytest.approx(4.0)

    def test_dimension_mismatch(self):
        """Vectors of different length are rejected."""
        with pytest.raises(InputError):
            evaluate(KernelSpec.linear(), [1, 2], [1, 2, 3])

    @pytest.mark.parametrize("kernel", ALL_KERNELS, ids=lambda k: k.label)
    def test_symmetry(self, kernel):
        """kappa(e, z) = kappa(z, e)."""
        rng = np.random.default_rng(3)
        e, z = rng.random(6), rng.random(6)
        assert evaluate(kernel, e, z) == pytest.approx(evaluate(kernel, z, e), rel=1e-15)


class TestGradient:
    """Test analytic kernel gradients."""

    def test_linear_gradient_is_z(self):
        """Linear gradient equals the second argument."""
        np.testing.assert_array_equal(gradient(KernelSpec.linear(), [7, -1], [3, 4]), [3, 4])

    def test_gaussian_gradient_vanishes_at_z(self):
        """Gaussian gradient is zero at e = z."""
        z = np.array([0.2, 0.4])
        np.testing.assert_array_equal(gradient(KernelSpec.gaussian(2.0), z, z), [0.0, 0.0])

    def test_polynomial_gradient_value(self):
        """2 (2 + 0.44) [2, 0] = [9.76, 0]."""
        g = gradient(KernelSpec.polynomial(2, 0.44), [1, 1], [2, 0])
        np.testing.assert_allclose(g, [9.76, 0.0], rtol=1e-12)

    @pytest.mark.parametrize("kernel", ALL_KERNELS, ids=lambda k: k.label)
    def test_matches_finite_differences(self, kernel):
        """Every component matches a central difference of kappa."""
        rng = np.random.default_rng(11)
        e, z = rng.uniform(0.1, 1.0, 5), rng.uniform(0.1, 1.0, 5)
        err = fd_check(lambda v: evaluate(kernel, v, z), gradient(kernel, e, z), e, step=1e-6)
        assert err < 1e-5


class TestSelfGradient:
    """Test the first-slot gradient of kappa(e, e)."""

    def test_gaussian_is_zero(self):
        """Gaussian self-gradient vanishes for any e."""
        rng = np.random.default_rng(0)
        for _ in range(20):
            np.testing.assert_array_equal(self_gradient(KernelSpec.gaussian(1.3), rng.random(4)), 0.0)

    def test_linear_is_identity(self):
        """Linear self-gradient returns e."""
        np.testing.assert_array_equal(self_gradient(KernelSpec.linear(), [0.5, 0.5]), [0.5, 0.5])

    def test_polynomial_value(self):
        """2 (eᵀe) e with eᵀe = 5."""
        np.testing.assert_allclose(self_gradient(KernelSpec.polynomial(2, 0.0), [1, 2]), [10, 20])


class TestGram:
    """Test Gram and cross-Gram assembly."""

    def test_linear_identity(self):
        """Orthonormal columns give the identity."""
        np.testing.assert_array_equal(gram(KernelSpec.linear(), np.eye(2)), np.eye(2))

    def test_gaussian_unit_diagonal(self):
        """kappa(e, e) = 1 on the diagonal."""
        E = np.random.default_rng(1).random((4, 5))
        np.testing.assert_array_equal(np.diag(gram(KernelSpec.gaussian(0.7), E)), np.ones(5))

    def test_polynomial_single_column(self):
        """(1 + 1)^2 = 4."""
        np.testing.assert_allclose(gram(KernelSpec.polynomial(2, 1.0), np.array([[1.0], [0.0]])), [[4.0]])

    def test_cross_gram_polynomial(self):
        """(2·1)^2 = 4 and (2·3)^2 = 36."""
        K = cross_gram(KernelSpec.polynomial(2, 0.0), np.array([[2.0], [0.0]]), np.array([[1.0, 3.0], [0.0, 0.0]]))
        np.testing.assert_allclose(K, [[4.0, 36.0]])

    def test_cross_gram_gaussian_matching_column(self):
        """A data column equal to an endmember gives 1."""
        X = np.random.default_rng(2).random((3, 4))
        K = cross_gram(KernelSpec.gaussian(1.0), X[:, [2]], X)
        assert K[0, 2] == 1.0

    def test_cross_gram_band_mismatch(self):
        """E and Z must share the band count."""
        with pytest.raises(InputError):
            cross_gram(KernelSpec.linear(), np.ones((3, 2)), np.ones((4, 2)))

    @pytest.mark.parametrize("kernel", ALL_KERNELS, ids=lambda k: k.label)
    def test_positive_semidefinite(self, kernel):
        """Gram matrices are symmetric PSD on nonnegative inputs."""
        E = np.random.default_rng(5).random((6, 8))
        K = gram(kernel, E)
        np.testing.assert_allclose(K, K.T, rtol=1e-13)
        assert np.linalg.eigvalsh(K).min() >= -1e-10 * max(1.0, np.abs(K).max())

    def test_matches_sklearn(self):
        """Gram blocks agree with scikit-learn's pairwise kernels."""
        rng = np.random.default_rng(8)
        E, X = rng.random((5, 3)), rng.random((5, 7))
        np.testing.assert_allclose(cross_gram(KernelSpec.linear(), E, X), linear_kernel(E.T, X.T), rtol=1e-12)
        np.testing.assert_allclose(
            cross_gram(KernelSpec.polynomial(2, 0.44), E, X),
            polynomial_kernel(E.T, X.T, degree=2, gamma=1.0, coef0=0.44),
            rtol=1e-12,
        )
        np.testing.assert_allclose(
            cross_gram(KernelSpec.gaussian(2.5), E, X),
            rbf_kernel(E.T, X.T, gamma=1.0 / (2 * 2.5**2)),
            rtol=1e-12,
        )

    @pytest.mark.parametrize("kernel", ALL_KERNELS, ids=lambda k: k.label)
    def test_diagonal(self, kernel):
        """diagonal(Z) is kappa(z_t, z_t) per column."""
        Z = np.random.default_rng(9).random((4, 6))
        expected = [evaluate(kernel, Z[:, t], Z[:, t]) for t in range(6)]
        np.testing.assert_allclose(diagonal(kernel, Z), expected, rtol=1e-12)


class TestWeightedGradientSum:
    """Test the batched gradient sums used by the solvers."""

    @pytest.mark.parametrize("kernel", ALL_KERNELS, ids=lambda k: k.label)
    def test_matches_pairwise_loop(self, kernel):
        """Column n equals sum_t W[n, t] grad kappa(e_n, z_t)."""
        rng = np.random.default_rng(4)
        E, Z, W = rng.random((5, 3)), rng.random((5, 6)), rng.random((3, 6))
        expected = np.column_stack(
            [sum(W[n, t] * gradient(kernel, E[:, n], Z[:, t]) for t in range(6)) for n in range(3)]
        )
        np.testing.assert_allclose(weighted_gradient_sum(kernel, E, Z, W), expected, rtol=1e-10, atol=1e-14)
