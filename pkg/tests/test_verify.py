import math
import unittest

from config import load_scenario
from lab_errors import InvalidArgument
from support import cached_profiles
from verify_service import (
    CHECK_NAMES,
    PDE_CHECKS,
    CheckRecord,
    VerifyContext,
    VerifyReport,
    abs_check,
    failed_records,
    lower_check,
    reduced_ode_study,
    rel_check,
    run_groups,
    skipped_records,
    upper_check,
    verify_all,
)


class RecordTests(unittest.TestCase):
    def test_helpers(self):
        self.assertTrue(rel_check("x", 1.0005, 1.0, 1e-3).passed)
        self.assertFalse(rel_check("x", math.nan, 1.0, 1e-3).passed)
        self.assertTrue(abs_check("x", 2.3, 2.0, 0.5).passed)
        self.assertFalse(upper_check("x", 2.0, 1.0).passed)
        self.assertTrue(lower_check("x", 2.0, 1.0).passed)
        self.assertIsNone(upper_check("x", 0.5, 1.0).tolerance)

    def test_record_dict(self):
        plain = CheckRecord("x", 1.0, 1.0, 0.1, True).to_dict()
        self.assertEqual(set(plain), {"name", "target", "measured", "tolerance", "pass"})
        skipped = skipped_records(["y"], "sem tempo")[0]
        self.assertTrue(skipped.passed)
        self.assertEqual(skipped.to_dict()["skipped"], True)
        failed = failed_records(["z"], InvalidArgument("mau"))[0]
        self.assertFalse(failed.passed)
        self.assertEqual(failed.detail, "invalid-argument: mau")

    def test_empty_report_does_not_pass(self):
        report = VerifyReport(scenario="verify_all", k=4)
        self.assertFalse(report.passed)
        with self.assertRaises(KeyError):
            report.check("constants.rho_k")
        report.extend([upper_check("a", 0.0, 1.0)])
        self.assertTrue(report.passed)
        self.assertIs(report.to_dict()["pass"], True)

    def test_check_names_are_unique(self):
        self.assertEqual(len(CHECK_NAMES), len(set(CHECK_NAMES)))
        self.assertTrue(set(PDE_CHECKS) <= set(CHECK_NAMES))


class BatteryTests(unittest.TestCase):
    def test_k_below_four_is_refused(self):
        with self.assertRaises(InvalidArgument):
            verify_all(3)

    def test_coarse_profiles_fail_every_group(self):
        settings = load_scenario(
            overrides={"run": {"k": 4}, "profile_grid": {"n": 64}, "verify": {"include_pde": False, "workers": 1}}
        )
        report = verify_all(4, settings)
        self.assertFalse(report.passed)
        self.assertEqual([check.name for check in report.checks], list(CHECK_NAMES))
        for check in report.checks:
            if check.name in PDE_CHECKS:
                self.assertTrue(check.skipped, check.name)
            else:
                self.assertFalse(check.passed, check.name)
                self.assertTrue(check.detail.startswith("grid-too-coarse:"), check.detail)

    def test_groups_on_prebuilt_profiles(self):
        settings = load_scenario(overrides={"verify": {"workers": 2}})
        ctx = VerifyContext(k=4, settings=settings)
        ctx.__dict__["ps"] = cached_profiles()
        report = run_groups(ctx, ("constants", "energy"), "verify_all")
        for name in ("constants.rho_k", "constants.lamq_norm", "constants.rho_identity", "energy.bubble", "energy.two_bubble"):
            self.assertTrue(report.check(name).passed, name)
        with self.assertRaises(KeyError):
            run_groups(ctx, ("bubbles",), "verify_all")

    def test_ansatz_group_checks_the_residual_forms(self):
        ctx = VerifyContext(k=4, settings=load_scenario(overrides={"run": {"seed": 11}}))
        ctx.__dict__["ps"] = cached_profiles()
        report = run_groups(ctx, ("ansatz",), "verify_all")
        for name in ("ansatz.bracket_forms", "ansatz.residual_identity", "ansatz.taylor_remainder"):
            self.assertTrue(report.check(name).passed, name)
        self.assertEqual(len(ctx.results["remainder_constants"]), 10)
        self.assertEqual(len(ctx.results["bracket_gaps"]), 3)


class ReducedOdeStudyTests(unittest.TestCase):
    def test_formal_start_follows_the_asymptotics(self):
        measures, traj = reduced_ode_study(cached_profiles().constants)
        self.assertEqual(measures["status"], "completed")
        self.assertAlmostEqual(measures["halving"] / measures["halving_target"], 1.0, delta=1e-2)
        self.assertAlmostEqual(measures["b_scaled"] / measures["b_target"], 1.0, delta=1e-2)
        self.assertLess(measures["first_integral"], 2e-2)
        self.assertAlmostEqual(traj.times[0], 50.0)


if __name__ == "__main__":
    unittest.main()
