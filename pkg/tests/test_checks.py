# pylint: disable=missing-docstring

import logging
import unittest
from fractions import Fraction

from fmpinn.checks import CHECKS, assert_all_passed, format_report, run_checks
from fmpinn.exceptions import CheckFailed
from fmpinn.loss import GammaSchedule

# Set up logging
logger = logging.getLogger("fmpinn")
logger.setLevel(logging.DEBUG)


class TestChecks(unittest.TestCase):
    def test_registry(self):
        self.assertGreaterEqual(len(CHECKS), 10)
        self.assertIn("gamma_schedule_table", CHECKS)
        self.assertIn("fdm_quadratic_exact", CHECKS)

    def test_all_checks_pass(self):
        results = run_checks()
        failed = [(result.name, result.detail) for result in results if not result.passed]
        self.assertEqual(failed, [])
        self.assertEqual([result.name for result in results], list(CHECKS))
        assert_all_passed(results)

    def test_shifted_penalty_breakpoint_is_caught(self):
        breakpoints = (
            Fraction(1, 10),
            Fraction(1, 5),
            Fraction(1, 4),
            Fraction(1, 2),
            Fraction(4, 5),
        )
        wrong = GammaSchedule(10.0, 50000, breakpoints)
        results = run_checks(["gamma_schedule_table"], gamma_schedule=wrong)
        self.assertFalse(results[0].passed)
        self.assertIn("37500", results[0].detail)
        with self.assertRaises(CheckFailed) as cm:
            assert_all_passed(results)
        self.assertEqual(cm.exception.failed, ["gamma_schedule_table"])

    def test_unknown_check(self):
        results = run_checks(["lr_schedule_table", "no_such_check"])
        self.assertEqual([result.passed for result in results], [True, False])
        self.assertEqual(results[1].detail, "unknown check")

    def test_report(self):
        results = run_checks(["lr_schedule_table", "no_such_check"])
        lines = format_report(results).splitlines()
        self.assertEqual(len(lines), 3)
        self.assertTrue(lines[0].startswith("PASS  lr_schedule_table"))
        self.assertTrue(lines[1].startswith("FAIL  no_such_check"))
        self.assertEqual(lines[2], "1/2 checks passed")


if __name__ == "__main__":
    unittest.main()
