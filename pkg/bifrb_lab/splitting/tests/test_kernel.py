import numpy as np
from django.test import SimpleTestCase

from splitting.extended import ExtendedReal
from splitting.kernel import (
    DomainExitError,
    GeneralizedReference,
    KernelError,
    KernelOracle,
    bregman_distance,
    euclidean_kernel,
    generalized_bregman,
    mirror_step,
    quartic_kernel,
    three_point_defect,
)


def entropy_kernel():
    return KernelOracle(
        name="entropy",
        value=lambda x: float(np.sum(x * np.log(x) - x)),
        gradient=lambda x: np.log(x),
        inverse_gradient=lambda y: np.exp(y),
        domain_probe=lambda x: bool(np.all(np.isfinite(x)) and np.all(x > 0)),
    )


class ExtendedRealTests(SimpleTestCase):
    def test_infinity_absorbs_finite_values(self):
        total = ExtendedReal.finite(2.0) + ExtendedReal.infinity()
        self.assertTrue(total.is_infinite)

    def test_domain_error_dominates_infinity(self):
        total = ExtendedReal.infinity() + ExtendedReal.domain_error()
        self.assertTrue(total.is_domain_error)

    def test_nan_and_minus_infinity_are_domain_errors(self):
        self.assertTrue(ExtendedReal.from_float(float("nan")).is_domain_error)
        self.assertTrue(ExtendedReal.from_float(float("-inf")).is_domain_error)
        self.assertEqual(float(ExtendedReal.finite(1.5) + 0.5), 2.0)


class BregmanDistanceTests(SimpleTestCase):
    def test_euclidean_distance_is_half_squared_norm(self):
        k = euclidean_kernel()
        x, y = np.array([1.0, -2.0]), np.array([0.5, 1.0])
        self.assertAlmostEqual(float(bregman_distance(k, x, y)), 0.5 * float(np.sum((x - y) ** 2)), places=14)

    def test_distance_to_itself_is_zero(self):
        rng = np.random.default_rng(3)
        for k in (euclidean_kernel(), quartic_kernel()):
            for x in rng.uniform(-2, 2, size=(20, 3)):
                self.assertEqual(float(bregman_distance(k, x, x)), 0.0)

    def test_outside_domain_is_infinite(self):
        k = entropy_kernel()
        self.assertTrue(bregman_distance(k, np.array([1.0]), np.array([-1.0])).is_infinite)
        self.assertTrue(bregman_distance(k, np.array([1.0]), np.array([2.0])).is_finite)

    def test_three_point_identity(self):
        rng = np.random.default_rng(4)
        k = quartic_kernel()
        for x, y, z in rng.uniform(-2, 2, size=(100, 3, 2)):
            self.assertLess(abs(three_point_defect(k, x, y, z)), 1e-9)

    def test_generalized_reference_may_be_negative(self):
        concave = GeneralizedReference.quadratic(-2.0)
        self.assertAlmostEqual(generalized_bregman(concave, [1.0], [0.0]), -1.0)

    def test_combination_matches_weighted_sum(self):
        k = quartic_kernel()
        ref = GeneralizedReference.combination((2.0, k), (-0.5, euclidean_kernel()))
        x = np.array([0.3, -1.2])
        self.assertAlmostEqual(ref.value(x), 2.0 * k.value(x) - 0.25 * float(x @ x), places=12)
        np.testing.assert_allclose(ref.gradient(x), 2.0 * k.gradient(x) - 0.5 * x)


class MirrorMapTests(SimpleTestCase):
    def test_quartic_inverse_gradient_round_trips(self):
        k = quartic_kernel()
        rng = np.random.default_rng(5)
        for x in rng.uniform(-5, 5, size=(200, 3)):
            np.testing.assert_allclose(k.inverse_gradient(k.gradient(x)), x, rtol=1e-10, atol=1e-12)
        np.testing.assert_array_equal(k.inverse_gradient(np.zeros(2)), np.zeros(2))

    def test_mirror_step_adds_in_the_dual(self):
        k = quartic_kernel()
        y = mirror_step(k, [1.0], [-1.0])
        # ∇h(1) = 2, so ∇h(y) = 1 and y³ + y = 1
        self.assertAlmostEqual(float(y[0] ** 3 + y[0]), 1.0, places=12)

    def test_mirror_step_rejects_points_outside_the_domain(self):
        with self.assertRaises(DomainExitError):
            mirror_step(entropy_kernel(), [-1.0], [0.0])

    def test_builtin_kernels_verify(self):
        rng = np.random.default_rng(6)
        euclidean_kernel().verify(rng, dimension=3, samples=300)
        quartic_kernel().verify(rng, dimension=3, samples=300)

    def test_verify_catches_an_overstated_modulus(self):
        k = euclidean_kernel()
        overstated = KernelOracle(
            name="overstated",
            value=k.value,
            gradient=k.gradient,
            inverse_gradient=k.inverse_gradient,
            strong_convexity=3.0,
        )
        with self.assertRaises(KernelError):
            overstated.verify(np.random.default_rng(7), dimension=2, samples=50)
