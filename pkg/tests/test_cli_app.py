import json
import os
import tempfile
import unittest

from app import create_app
from report_store import ReportStore
from support import scenario_file


class HttpTests(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.app = create_app()
        self.app.config.update(TESTING=True, OUTPUT_DIR=self.tmp.name)
        self.client = self.app.test_client()

    def tearDown(self):
        self.tmp.cleanup()

    def test_health(self):
        payload = self.client.get("/health").get_json()
        self.assertEqual(payload["status"], "ok")
        self.assertIn("verify_all", payload["scenarios"])

    def test_defaults(self):
        payload = self.client.get("/defaults").get_json()
        self.assertEqual(payload["run"]["k"], 4)
        self.assertEqual(payload["evolve"]["r_max"], 4.0)

    def test_reports(self):
        self.assertEqual(self.client.get("/reports/bolhas").status_code, 404)
        self.assertEqual(self.client.get("/reports/profiles").status_code, 404)
        ReportStore(self.tmp.name).write_json("profiles", "report.json", {"scenario": "profiles", "pass": True})
        response = self.client.get("/reports/profiles")
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.get_json(), {"scenario": "profiles", "pass": True})


class CliTests(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.runner = create_app().test_cli_runner()

    def tearDown(self):
        self.tmp.cleanup()

    def test_defaults_command(self):
        result = self.runner.invoke(args=["defaults"])
        self.assertEqual(result.exit_code, 0)
        self.assertIn("[run]", result.output)
        self.assertIn("[evolve]", result.output)

    def test_invalid_k_is_reported(self):
        result = self.runner.invoke(args=["verify", "--k", "3", "--out", self.tmp.name])
        self.assertEqual(result.exit_code, 1)
        self.assertIn("k ≥ 4 required", result.output)
        self.assertIn("invalid-argument", result.output)

    def test_failed_battery_exits_with_two(self):
        result = self.runner.invoke(
            args=["verify", "--k", "4", "--profile-n", "64", "--no-pde", "--workers", "1", "--out", self.tmp.name]
        )
        self.assertEqual(result.exit_code, 2)
        summary = json.loads(result.output.strip().splitlines()[-1])
        self.assertIs(summary["ok"], False)
        self.assertIn("constants.rho_k", summary["failed"])
        self.assertTrue(os.path.exists(os.path.join(self.tmp.name, "verify_all", "report.json")))
        self.assertTrue(os.path.exists(os.path.join(self.tmp.name, "verify_all", "checks.csv")))

    def test_reduced_ode_writes_its_table(self):
        path = scenario_file(self.tmp.name, "[profile_grid]\nn = 4096\n")
        result = self.runner.invoke(args=["reduced-ode", "--config", path, "--out", self.tmp.name, "--t1", "120"])
        self.assertIn(result.exit_code, (0, 2))
        summary = json.loads(result.output.strip().splitlines()[-1])
        self.assertEqual(summary["scenario"], "reduced_ode")
        self.assertTrue(os.path.exists(os.path.join(self.tmp.name, "reduced_ode", "reduced_ode.csv")))


if __name__ == "__main__":
    unittest.main()
