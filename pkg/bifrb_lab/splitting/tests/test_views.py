from django.test import TestCase

from splitting.models import SolverRun


class HealthCheckTests(TestCase):
    def test_health(self):
        response = self.client.get("/api/health/")
        self.assertEqual(response.status_code, 200)
        payload = response.json()
        self.assertEqual(payload["status"], "ok")
        self.assertEqual(payload["service"], "bifrb_lab_api")
        self.assertTrue(payload["timestamp"].endswith("Z"))

    def test_post_is_not_allowed(self):
        self.assertEqual(self.client.post("/api/health/").status_code, 405)


class InstanceCatalogTests(TestCase):
    def test_lists_registered_instances(self):
        payload = self.client.get("/api/instances/").json()
        names = [entry["name"] for entry in payload["instances"]]
        self.assertEqual(len(names), 7)
        self.assertIn("counterexample", names)
        counterexample = next(entry for entry in payload["instances"] if entry["name"] == "counterexample")
        self.assertEqual(counterexample["defaults"], {"L": 1.0})


class RunViewsTests(TestCase):
    def setUp(self):
        self.quartic = SolverRun.objects.create(
            run_id="RUN-AAAAAAAAAA",
            instance_name="quartic1d",
            plan_mode="auto",
            corollary_tag="ThmSD_A",
            status="converged",
            iterations=812,
            final_phi=1e-18,
            manifest={"instance": "quartic1d", "x0": [2.0]},
        )
        SolverRun.objects.create(
            run_id="RUN-BBBBBBBBBB",
            instance_name="counterexample",
            plan_mode="manual",
            corollary_tag="Manual",
            certified=False,
            status="max_iters",
            exit_code=2,
            iterations=1000,
        )

    def test_list_runs(self):
        payload = self.client.get("/api/runs/").json()
        self.assertEqual({run["run_id"] for run in payload["runs"]}, {"RUN-AAAAAAAAAA", "RUN-BBBBBBBBBB"})
        self.assertNotIn("manifest", payload["runs"][0])

    def test_filter_by_instance(self):
        payload = self.client.get("/api/runs/", {"instance": "counterexample"}).json()
        self.assertEqual([run["run_id"] for run in payload["runs"]], ["RUN-BBBBBBBBBB"])
        self.assertEqual(payload["runs"][0]["exit_code"], 2)

    def test_run_detail_includes_the_manifest(self):
        payload = self.client.get(f"/api/runs/{self.quartic.run_id}/").json()
        self.assertEqual(payload["status"], "converged")
        self.assertEqual(payload["manifest"]["x0"], [2.0])

    def test_unknown_run(self):
        response = self.client.get("/api/runs/RUN-MISSING/")
        self.assertEqual(response.status_code, 404)
        self.assertEqual(response.json(), {"error": "Run not found."})
