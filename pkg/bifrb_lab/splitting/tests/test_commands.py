import json
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase, override_settings

from splitting.models import SolverRun
from splitting.problem import build_instance


class CommandTestCase(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        settings_override = override_settings(BIFRB_OUTPUT_DIR=self.tmp.name)
        settings_override.enable()
        self.addCleanup(settings_override.disable)

    def call(self, *args, **options) -> str:
        out = StringIO()
        call_command(*args, stdout=out, **options)
        return out.getvalue()


class SolveCommandTests(CommandTestCase):
    def test_certified_run_converges(self):
        output = self.call("solve", instance="quartic1d", mode="thmSD-A", x0=[2.0])
        self.assertIn("Converged", output)
        run = SolverRun.objects.get()
        self.assertEqual(run.status, "converged")
        self.assertAlmostEqual(run.final_phi, 0.0, places=10)
        self.assertTrue(Path(run.trace_path).exists())
        self.assertTrue(run.trace_path.startswith(self.tmp.name))

    def test_linesearch_run(self):
        output = self.call("solve", instance="smooth_toy", linesearch="broyden", x0=[1.0])
        self.assertIn("Converged", output)
        self.assertTrue(SolverRun.objects.get().manifest["linesearch"]["enabled"])

    def test_instance_parameters(self):
        self.call("solve", instance="phase_retrieval", params=[("g", "box"), ("box_radius", 1.5)], x0=[1.2])
        self.assertEqual(SolverRun.objects.get().manifest["instance_params"]["box_radius"], 1.5)

    def test_max_iters_exits_with_code_two(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("solve", instance="quartic1d", x0=[2.0], max_iters=3)
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertEqual(SolverRun.objects.get().iterations, 3)

    def test_missing_instance_exits_with_code_one(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("solve")
        self.assertEqual(ctx.exception.returncode, 1)

    def test_rejected_plan_exits_with_code_one(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("solve", instance="counterexample", mode="thmSD-A", alpha=0.5)
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertFalse(SolverRun.objects.exists())

    def test_config_file_with_overrides(self):
        config = Path(self.tmp.name) / "run.json"
        config.write_text(json.dumps({"instance": "smooth_toy", "stop": {"max_iters": 2}, "start": {"x_minus1": [1.0], "x0": [1.0]}}))
        self.call("solve", config=str(config), max_iters=10_000)
        self.assertEqual(SolverRun.objects.get().status, "converged")

    def test_broken_config_file(self):
        config = Path(self.tmp.name) / "run.json"
        config.write_text("{")
        with self.assertRaises(CommandError) as ctx:
            self.call("solve", config=str(config))
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertIn("run.json:1:2", str(ctx.exception))


class CounterexampleCommandTests(CommandTestCase):
    def test_tight_stepsize_never_converges(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("counterexample", max_iters=20)
        self.assertEqual(ctx.exception.returncode, 2)
        run = SolverRun.objects.get()
        self.assertFalse(run.certified)
        self.assertEqual(run.corollary_tag, "Manual")
        self.assertAlmostEqual(run.final_merit, -0.5)

    def test_smaller_stepsize_from_a_fixed_point(self):
        output = self.call("counterexample", alpha=0.3, x_minus1=1.0)
        self.assertIn("Converged in 1 iterations.", output)


class CertifyCommandTests(CommandTestCase):
    def _report(self, output: str) -> dict:
        return json.loads(output[: output.rindex("}") + 1])

    def test_certified_instance_passes(self):
        report = self._report(self.call("certify", instance="smooth_toy", samples=20))
        self.assertTrue(report["ok"])
        statuses = {result["name"]: result["status"] for result in report["results"]}
        self.assertEqual(statuses["merit_decrease"], "pass")
        self.assertEqual(statuses["reflected_gradient_equivalence"], "pass")

    def test_manual_counterexample_fails_as_expected(self):
        output = self.call(
            "certify", instance="counterexample", manual=True, alpha=0.5, x0=[1.0], x_minus1=[-1.0], max_iters=30, samples=20
        )
        report = self._report(output)
        self.assertTrue(report["ok"])
        self.assertFalse(report["certified"])
        statuses = {result["name"]: result["status"] for result in report["results"]}
        self.assertEqual(statuses["merit_decrease"], "expected-fail")
        self.assertEqual(statuses["step_summability"], "expected-fail")
        self.assertEqual(statuses["reflected_gradient_equivalence"], "skipped")
        self.assertFalse(SolverRun.objects.exists())


class RatesCommandTests(CommandTestCase):
    def test_linear_rate_on_a_solved_trace(self):
        self.call("solve", instance="convex_quadratic", params=[("l1_weight", 0.0)], x0=[1.0, -1.0])
        trace_path = SolverRun.objects.get().trace_path
        phi_star = build_instance("convex_quadratic", l1_weight=0.0).known_optimum
        output = self.call("rates", trace_path, phi_star=phi_star)
        self.assertIn("Regime: linear", output)

    def test_missing_trace(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("rates", str(Path(self.tmp.name) / "nope.csv"))
        self.assertEqual(ctx.exception.returncode, 1)


class ListInstancesCommandTests(CommandTestCase):
    def test_lists_every_instance(self):
        output = self.call("list_instances")
        self.assertIn("quartic1d", output)
        self.assertIn("phase_retrieval", output)
        self.assertIn("7 instances registered.", output)
