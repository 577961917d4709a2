from dataclasses import replace

import numpy as np
from django.test import SimpleTestCase

from splitting.kernel import euclidean_kernel
from splitting.planner import plan_auto, plan_manual
from splitting.problem import ProblemInstance, QuadraticFunction, ZeroFunction, build_instance, phi
from splitting.solver import (
    CertificationError,
    RunStatus,
    StopCriteria,
    frb_operator,
    model_value,
    model_value_bregman_form,
    residual,
    run,
    select_candidate,
)

from .oracle import grid_argmin, subgradient_distance_1d


def half_square() -> ProblemInstance:
    return ProblemInstance(
        name="half_square",
        f=QuadraticFunction([[1.0]]),
        g=ZeroFunction(),
        kernel=euclidean_kernel(),
        dimension=1,
        known_optimum=0.0,
        known_minimizer=np.array([0.0]),
        level_bounded=True,
    )


class CounterexampleTests(SimpleTestCase):
    def setUp(self):
        self.problem = build_instance("counterexample")

    def test_tight_stepsize_oscillates_between_the_two_points(self):
        params = plan_manual(self.problem, beta=0.0, alpha=0.5)
        result = run(self.problem, params, [-1.0], [1.0], StopCriteria(max_iters=50))
        self.assertIs(result.status, RunStatus.MAX_ITERS)
        self.assertEqual(result.exit_code, 2)
        self.assertEqual(result.iterations, 50)
        for record in result.trace:
            expected = -1.0 if record.k % 2 == 0 else 1.0
            self.assertEqual(record.x[0], expected)
            self.assertEqual(record.D_step, 2.0)
            self.assertAlmostEqual(record.merit, -0.5, places=12)

    def test_smaller_stepsize_stays_put(self):
        params = plan_manual(self.problem, beta=0.0, alpha=0.3)
        result = run(self.problem, params, [1.0], [1.0])
        self.assertIs(result.status, RunStatus.CONVERGED)
        self.assertEqual(result.iterations, 1)
        np.testing.assert_array_equal(result.x_final, [1.0])

    def test_certified_run_aborts_when_decrease_fails(self):
        params = replace(plan_manual(self.problem, beta=0.0, alpha=0.5), certified=True)
        with self.assertRaises(CertificationError) as ctx:
            run(self.problem, params, [-1.0], [1.0])
        error = ctx.exception
        self.assertIs(error.result.status, RunStatus.CERTIFICATION_FAILED)
        self.assertEqual(error.result.exit_code, 3)
        self.assertEqual(error.result.iterations, 1)
        self.assertFalse(error.certificate.ok)


class ClosedFormTests(SimpleTestCase):
    def setUp(self):
        self.problem = half_square()
        self.params = plan_manual(self.problem, beta=0.0, gamma=0.5)

    def test_operator(self):
        np.testing.assert_allclose(frb_operator(self.problem, self.params, [1.0], [1.0]), [0.5])

    def test_residual(self):
        np.testing.assert_allclose(residual(self.problem, self.params, [0.5], [1.0], [1.0]), [0.5])

    def test_model_values(self):
        self.assertAlmostEqual(float(model_value(self.problem, self.params, [0.5], [1.0], [1.0])), 0.25)
        self.assertAlmostEqual(float(model_value(self.problem, self.params, [0.0], [1.0], [1.0])), 0.5)

    def test_reflected_gradient_step(self):
        problem = build_instance("smooth_toy")
        params = plan_auto(problem)
        self.assertEqual(params.beta, 0.0)
        rng = np.random.default_rng(3)
        for x, x_minus in rng.uniform(-2.0, 2.0, size=(20, 2, 1)):
            expected = x - params.gamma * (2.0 * problem.f.gradient(x) - problem.f.gradient(x_minus))
            np.testing.assert_allclose(frb_operator(problem, params, x, x_minus), expected, rtol=1e-12, atol=1e-12)


class ModelTests(SimpleTestCase):
    def test_model_is_tangent_to_phi(self):
        for name in ("nonconvex_qp_l1", "convex_quadratic", "concave_box", "quartic1d", "smooth_toy", "phase_retrieval"):
            problem = build_instance(name)
            params = plan_auto(problem)
            rng = np.random.default_rng(11)
            for x, x_minus in zip(problem.sample_feasible(rng, 1000), problem.sample_points(rng, 1000)):
                with self.subTest(instance=name):
                    value = float(model_value(problem, params, x, x, x_minus))
                    self.assertAlmostEqual(value, float(phi(problem, x)), delta=1e-9 * (1.0 + abs(value)))

    def test_inner_product_and_bregman_forms_agree(self):
        for name in ("nonconvex_qp_l1", "convex_quadratic", "concave_box", "quartic1d", "smooth_toy", "phase_retrieval"):
            problem = build_instance(name)
            params = plan_auto(problem)
            rng = np.random.default_rng(5)
            for w, x, x_minus in zip(
                problem.sample_feasible(rng, 1000), problem.sample_points(rng, 1000), problem.sample_points(rng, 1000)
            ):
                with self.subTest(instance=name):
                    inner = float(model_value(problem, params, w, x, x_minus))
                    bregman = float(model_value_bregman_form(problem, params, w, x, x_minus))
                    self.assertAlmostEqual(inner, bregman, delta=1e-9 * (1.0 + abs(inner)))

    def test_model_is_infinite_outside_dom_g(self):
        problem = build_instance("counterexample")
        params = plan_manual(problem, beta=0.0, alpha=0.3)
        self.assertFalse(model_value(problem, params, [0.0], [1.0], [1.0]).is_finite)


class ResidualTests(SimpleTestCase):
    def test_residual_is_the_gradient_at_the_new_point_when_g_is_zero(self):
        problem = build_instance("quartic1d")
        params = plan_auto(problem)
        rng = np.random.default_rng(8)
        for x, x_minus in rng.uniform(-1.5, 1.5, size=(20, 2, 1)):
            x_bar = frb_operator(problem, params, x, x_minus)
            np.testing.assert_allclose(
                residual(problem, params, x_bar, x, x_minus), problem.f.gradient(x_bar), atol=1e-8
            )


class RunTests(SimpleTestCase):
    def test_quartic_converges_to_the_nearby_minimizer(self):
        problem = build_instance("quartic1d")
        result = run(problem, plan_auto(problem), [2.0], [2.0])
        self.assertIs(result.status, RunStatus.CONVERGED)
        self.assertAlmostEqual(float(result.x_final[0]), 1.0, places=6)
        self.assertLess(result.trace[-1].residual_norm, 1e-8)

    def test_certified_runs_decrease_the_merit(self):
        cases = [(name, "A") for name in ("nonconvex_qp_l1", "convex_quadratic", "concave_box", "smooth_toy", "quartic1d")]
        cases += [(name, "B") for name in ("nonconvex_qp_l1", "convex_quadratic", "concave_box")]
        for name, regime in cases:
            problem = build_instance(name)
            params = plan_auto(problem, regime=regime)
            for seed in range(10):
                rng = np.random.default_rng(seed)
                x_minus1, x0 = problem.sample_feasible(rng, 2)
                with self.subTest(instance=name, regime=regime, seed=seed):
                    result = run(problem, params, x_minus1, x0, StopCriteria(max_iters=500))
                    merits = [record.merit for record in result.trace]
                    for before, after in zip(merits, merits[1:]):
                        self.assertLessEqual(after, before + 1e-9 * (1.0 + abs(before)))
                    for record in result.trace:
                        self.assertGreaterEqual(record.slack_sd, -1e-9)
                        self.assertGreaterEqual(record.slack_lgeq, -1e-9)
                    tails = np.cumsum([record.D_step for record in result.trace][::-1])
                    self.assertLess(tails.min(), 1e-6)

    def test_stop_criteria_need_small_steps_and_residuals(self):
        problem = build_instance("smooth_toy")
        result = run(problem, plan_auto(problem), [1.0], [1.0], StopCriteria(eps_residual=1e-10))
        last = result.trace[-1]
        self.assertIs(result.status, RunStatus.CONVERGED)
        self.assertLessEqual(last.residual_norm, 1e-10)
        self.assertLessEqual(last.D_step, 1e-10)
        np.testing.assert_allclose(result.x_final, problem.known_minimizer, atol=1e-8)


class TieBreakTests(SimpleTestCase):
    def test_rules(self):
        candidates = [np.array([-1.0]), np.array([1.0])]
        x = np.array([0.5])
        self.assertEqual(select_candidate(candidates, x, "farthest")[0], -1.0)
        self.assertEqual(select_candidate(candidates, x, "nearest")[0], 1.0)
        self.assertEqual(select_candidate(candidates, x, "first")[0], -1.0)

    def test_unknown_rule(self):
        with self.assertRaises(ValueError):
            select_candidate([np.array([0.0])], np.array([0.0]), "random")


def one_dimensional_cases():
    return (
        (build_instance("convex_quadratic", dimension=1), (-4.0, 4.0), 3.0),
        (build_instance("concave_box", dimension=1), (-1.0, 1.0), 0.7),
        (build_instance("quartic1d"), (-3.0, 3.0), 2.0),
        (build_instance("smooth_toy"), (-3.0, 3.0), 1.5),
    )


class OracleTests(SimpleTestCase):
    def grid_step(self, problem, params, x, x_minus, box):
        lo, hi = box
        point, _ = grid_argmin(
            lambda w: float(model_value(problem, params, w, x, x_minus)),
            [box],
            resolution=1001,
            extra_points=([lo], [0.0], [hi]),
        )
        return point

    def test_operator_matches_the_grid_minimizer_of_the_model(self):
        for problem, box, _ in one_dimensional_cases():
            params = plan_auto(problem)
            rng = np.random.default_rng(13)
            for x, x_minus in rng.uniform(0.8 * box[0], 0.8 * box[1], size=(5, 2, 1)):
                with self.subTest(instance=problem.name, x=float(x[0]), x_minus=float(x_minus[0])):
                    np.testing.assert_allclose(
                        frb_operator(problem, params, x, x_minus), self.grid_step(problem, params, x, x_minus, box), atol=1e-6
                    )

    def test_fifty_iterations_follow_the_grid_iteration(self):
        for problem, box, start in one_dimensional_cases():
            params = plan_auto(problem)
            result = run(problem, params, [start], [start], StopCriteria(eps_residual=0.0, max_iters=50))
            x, x_minus = np.array([start]), np.array([start])
            for record in result.trace:
                x, x_minus = self.grid_step(problem, params, x, x_minus, box), x
                with self.subTest(instance=problem.name, k=record.k):
                    np.testing.assert_allclose(record.x, x, atol=1e-6)


class TerminationTests(SimpleTestCase):
    def test_level_bounded_instances_reach_the_residual_tolerance(self):
        for name in ("nonconvex_qp_l1", "convex_quadratic", "concave_box", "smooth_toy", "quartic1d", "phase_retrieval"):
            problem = build_instance(name)
            self.assertTrue(problem.level_bounded)
            x_minus1, x0 = problem.sample_feasible(np.random.default_rng(0), 2)
            with self.subTest(instance=name):
                result = run(problem, plan_auto(problem), x_minus1, x0, StopCriteria(eps_residual=1e-8, max_iters=100_000))
                self.assertIs(result.status, RunStatus.CONVERGED)
                self.assertLessEqual(result.trace[-1].residual_norm, 1e-8)

    def test_residual_bounds_the_subgradient_distance_at_termination(self):
        for problem, _, start in one_dimensional_cases():
            result = run(problem, plan_auto(problem), [start], [0.5 * start], StopCriteria(eps_residual=1e-8, max_iters=100_000))
            self.assertIs(result.status, RunStatus.CONVERGED)
            with self.subTest(instance=problem.name, x=float(result.x_final[0])):
                distance = subgradient_distance_1d(lambda w: float(phi(problem, w)), result.x_final)
                self.assertLessEqual(distance, result.trace[-1].residual_norm + 1e-6)
