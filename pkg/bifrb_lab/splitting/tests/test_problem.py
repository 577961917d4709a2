from unittest import mock

import numpy as np
from django.test import SimpleTestCase
from scipy import optimize

from splitting.kernel import euclidean_kernel, quartic_kernel
from splitting.problem import (
    DiscreteSetIndicator,
    InstanceError,
    L1Norm,
    OracleCheckError,
    ProblemInstance,
    ProxError,
    QuadraticFunction,
    ZeroFunction,
    build_instance,
    envelope_threshold_check,
    list_instances,
    phi,
    prox_threshold_check,
    sample_relative_moduli,
    soft_threshold,
)

from .oracle import grid_argmin

INSTANCE_NAMES = {
    "counterexample",
    "nonconvex_qp_l1",
    "phase_retrieval",
    "quartic1d",
    "convex_quadratic",
    "concave_box",
    "smooth_toy",
}


class RegistryTests(SimpleTestCase):
    def test_all_instances_are_registered(self):
        self.assertEqual({entry.name for entry in list_instances()}, INSTANCE_NAMES)

    def test_every_instance_builds_and_verifies(self):
        for name in INSTANCE_NAMES:
            with self.subTest(instance=name):
                problem = build_instance(name)
                self.assertEqual(problem.name, name)

    def test_unknown_instance_is_rejected(self):
        with self.assertRaises(InstanceError):
            build_instance("does_not_exist")

    def test_unknown_parameter_is_rejected(self):
        with self.assertRaises(InstanceError):
            build_instance("smooth_toy", curvature=2.0)

    def test_phase_retrieval_rejects_unknown_g(self):
        with self.assertRaises(InstanceError):
            build_instance("phase_retrieval", g="huber")

    def test_overstated_modulus_fails_verification(self):
        problem = ProblemInstance(
            name="overstated",
            f=QuadraticFunction([[1.0]], sigma_f=2.0, sigma_minus_f=-2.0),
            g=ZeroFunction(),
            kernel=euclidean_kernel(),
            dimension=1,
        )
        with self.assertRaises(OracleCheckError):
            problem.verify(np.random.default_rng(0))


class ModuliTests(SimpleTestCase):
    def test_declared_moduli_are_conservative(self):
        rng = np.random.default_rng(11)
        for name, params in (
            ("nonconvex_qp_l1", {}),
            ("phase_retrieval", {"dimension": 2}),
            ("quartic1d", {}),
            ("smooth_toy", {}),
            ("concave_box", {}),
        ):
            problem = build_instance(name, **params)
            if problem.f.hessian(np.zeros(problem.dimension)) is None:
                continue
            with self.subTest(instance=name):
                sigma_f, sigma_minus_f = sample_relative_moduli(problem.f, problem.kernel, rng, problem.dimension)
                self.assertLessEqual(problem.f.sigma_f, sigma_f + 1e-9)
                self.assertLessEqual(problem.f.sigma_minus_f, sigma_minus_f + 1e-9)

    def test_thresholds(self):
        problem = build_instance("quartic1d")
        # sigma_minus_f = -3 and sigma_f = -1
        self.assertTrue(prox_threshold_check(problem, 0.3))
        self.assertFalse(prox_threshold_check(problem, 0.4))
        self.assertTrue(envelope_threshold_check(problem, 0.9))
        self.assertFalse(envelope_threshold_check(problem, 1.0))


class ProxTests(SimpleTestCase):
    def test_soft_threshold(self):
        np.testing.assert_allclose(soft_threshold(np.array([-2.0, 0.05, 0.5]), 0.1), [-1.9, 0.0, 0.4])

    def test_euclidean_l1_box_prox_matches_grid(self):
        g, k, gamma = L1Norm(0.3, radius=1.5), euclidean_kernel(), 0.7
        for tilt in (-3.0, -0.1, 0.15, 0.9, 2.5):
            with self.subTest(tilt=tilt):
                (w,) = g.tilted_bregman_prox(k, gamma, np.array([tilt]))
                point, value = grid_argmin(lambda z: g.subproblem_value(k, gamma, np.array([tilt]), z), [(-1.5, 1.5)])
                self.assertAlmostEqual(g.subproblem_value(k, gamma, np.array([tilt]), w), value, places=8)
                self.assertLess(abs(w[0] - point[0]), 1e-4)

    def test_quartic_l1_prox_matches_grid(self):
        g, k, gamma = L1Norm(0.5), quartic_kernel(), 0.4
        for tilt in (-4.0, 0.1, 1.7):
            (w,) = g.tilted_bregman_prox(k, gamma, np.array([tilt]))
            _, value = grid_argmin(lambda z: g.subproblem_value(k, gamma, np.array([tilt]), z), [(-3.0, 3.0)])
            self.assertAlmostEqual(g.subproblem_value(k, gamma, np.array([tilt]), w), value, places=8)

    def test_numerical_prox_in_two_dimensions(self):
        g, k, gamma = L1Norm(0.2, radius=1.0), quartic_kernel(), 0.5
        tilt = np.array([2.5, -0.05])
        (w,) = g.tilted_bregman_prox(k, gamma, tilt)
        self.assertTrue(np.all(np.abs(w) <= 1.0 + 1e-12))
        _, value = grid_argmin(lambda z: g.subproblem_value(k, gamma, tilt, z), [(-1.0, 1.0), (-1.0, 1.0)])
        self.assertLessEqual(g.subproblem_value(k, gamma, tilt, w), value + 1e-7)

    def test_numerical_prox_failure_far_from_stationarity_raises(self):
        g, k = L1Norm(0.2, radius=1.0), quartic_kernel()
        stalled = optimize.OptimizeResult(x=np.zeros(4), success=False, message="ABNORMAL_TERMINATION_IN_LNSRCH")
        with mock.patch("splitting.problem.optimize.minimize", return_value=stalled):
            with self.assertRaises(ProxError):
                g.tilted_bregman_prox(k, 0.5, np.array([2.5, -0.05]))

    def test_numerical_prox_abnormal_stop_at_the_solution_is_kept(self):
        g, k, tilt = L1Norm(0.2, radius=1.0), quartic_kernel(), np.array([2.5, -0.05])
        (w,) = g.tilted_bregman_prox(k, 0.5, tilt)
        converged = optimize.OptimizeResult(
            x=np.concatenate([np.maximum(w, 0.0), np.maximum(-w, 0.0)]),
            success=False,
            message="ABNORMAL_TERMINATION_IN_LNSRCH",
        )
        with mock.patch("splitting.problem.optimize.minimize", return_value=converged):
            (again,) = g.tilted_bregman_prox(k, 0.5, tilt)
        np.testing.assert_allclose(again, w)

    def test_discrete_prox_returns_all_ties(self):
        g = DiscreteSetIndicator([[-1.0], [1.0]])
        ties = g.tilted_bregman_prox(euclidean_kernel(), 0.5, np.array([0.0]))
        self.assertEqual(sorted(float(t[0]) for t in ties), [-1.0, 1.0])
        (single,) = g.tilted_bregman_prox(euclidean_kernel(), 0.5, np.array([0.2]))
        self.assertEqual(float(single[0]), 1.0)

    def test_phi_is_infinite_off_the_discrete_set(self):
        problem = build_instance("counterexample")
        self.assertTrue(phi(problem, [0.5]).is_infinite)
        self.assertEqual(float(phi(problem, [1.0])), 0.5)

    def test_known_minimizers_beat_random_feasible_points(self):
        rng = np.random.default_rng(12)
        for name in ("quartic1d", "smooth_toy", "concave_box"):
            problem = build_instance(name, **({"dimension": 1} if name == "concave_box" else {}))
            best = float(phi(problem, problem.known_minimizer))
            self.assertAlmostEqual(best, problem.known_optimum, places=12)
            for x in problem.sample_feasible(rng, 200):
                self.assertGreaterEqual(float(phi(problem, x)), best - 1e-12)
