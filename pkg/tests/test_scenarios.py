import csv
import json
import os
import tempfile
import unittest

from config import load_scenario
from export_service import MODTRACK_HEADER, ODE_HEADER, PROFILE_HEADER, STATES_FILE
from scenario_service import REPORT_FILE, run, stored_report
from support import scenario_file, slow

SMALL_PROFILES = "[profile_grid]\nn = 4096\n\n[verify]\nworkers = 1\n"


def _header(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return tuple(next(csv.reader(fh)))


def _read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


class ProfilesScenarioTests(unittest.TestCase):
    def _run(self, out):
        path = scenario_file(out, SMALL_PROFILES)
        return run(load_scenario(path, {"run": {"scenario": "profiles", "output_dir": out}}))

    def test_artifacts_and_report(self):
        with tempfile.TemporaryDirectory() as tmp:
            report = self._run(tmp)
            self.assertTrue(report.check("constants.rho_k").passed)
            folder = os.path.join(tmp, "profiles")
            self.assertEqual(_header(os.path.join(folder, "profiles.csv")), PROFILE_HEADER)
            with open(os.path.join(folder, "constants.json"), encoding="utf-8") as fh:
                constants = json.load(fh)
            self.assertEqual(constants["k"], 4)
            stored = stored_report(tmp, "profiles")
            self.assertEqual(stored["scenario"], "profiles")
            self.assertEqual(stored["config"]["profile_grid"]["n"], 4096)
            self.assertIsNone(stored_report(tmp, "ansatz"))

    def test_reruns_are_byte_identical(self):
        names = ("profiles.csv", "constants.json", REPORT_FILE)
        with tempfile.TemporaryDirectory() as tmp:
            self._run(tmp)
            first = {name: _read_bytes(os.path.join(tmp, "profiles", name)) for name in names}
            self._run(tmp)
            second = {name: _read_bytes(os.path.join(tmp, "profiles", name)) for name in names}
        self.assertEqual(first, second)


class ReducedOdeScenarioTests(unittest.TestCase):
    def test_table_is_written(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = scenario_file(tmp, SMALL_PROFILES + "\n[reduced_ode]\nt1 = 120.0\n")
            report = run(load_scenario(path, {"run": {"scenario": "reduced_ode", "output_dir": tmp}}))
            self.assertEqual(
                [check.name for check in report.checks][:2],
                ["reduced_ode.halving", "reduced_ode.b_asymptotic"],
            )
            self.assertTrue(report.check("reduced_ode.halving").passed)
            table = os.path.join(tmp, "reduced_ode", "reduced_ode.csv")
            self.assertEqual(_header(table), ODE_HEADER)


@slow
class EvolveModulateScenarioTests(unittest.TestCase):
    def test_modulate_reads_evolve_output(self):
        text = (
            "[profile_grid]\nn = 16384\n\n[verify]\nworkers = 1\n\n"
            "[evolve]\nlam0 = 0.05\ndecades = 0.1\nrecord_dt = 0.1\nsnapshots = 3\n"
        )
        with tempfile.TemporaryDirectory() as tmp:
            path = scenario_file(tmp, text)
            evolved = run(load_scenario(path, {"run": {"scenario": "evolve", "output_dir": tmp}}))
            folder = os.path.join(tmp, "evolve")
            self.assertTrue(os.path.exists(os.path.join(folder, STATES_FILE)))
            self.assertTrue(os.path.exists(os.path.join(folder, "series.csv")))
            self.assertEqual(len([name for name in os.listdir(folder) if name.startswith("t_")]), 3)
            self.assertEqual(evolved.results["evolve"]["n"], 8192)

            run(
                load_scenario(
                    path,
                    {"run": {"scenario": "modulate", "output_dir": tmp}, "modulate": {"evolve_dir": folder}},
                )
            )
            out = os.path.join(tmp, "modulate")
            self.assertEqual(_header(os.path.join(out, "modtrack.csv")), MODTRACK_HEADER)
            with open(os.path.join(out, "bprime_report.json"), encoding="utf-8") as fh:
                bprime = json.load(fh)
            self.assertEqual(set(bprime), {"fraction_satisfied", "measured_c0", "measured_c1"})


if __name__ == "__main__":
    unittest.main()
