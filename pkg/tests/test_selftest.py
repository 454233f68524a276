"""invariant battery tests"""
import unittest

import numpy as np

from src.selftest import (
    CHECKS,
    SELFTEST_SAMPLES,
    check_distance_symmetry,
    check_link_inequality,
    check_round_trip,
    check_rotation_inequality,
    run_selftest,
)


class TestLargeSuites(unittest.TestCase):
    """Test the sampled suites at full size"""

    def test_default_size(self):
        self.assertEqual(SELFTEST_SAMPLES, 100_000)

    def test_rotation_inequality(self):
        passed, detail = check_rotation_inequality(np.random.default_rng(1), 100_000)
        self.assertTrue(passed, msg=detail)

    def test_link_inequality(self):
        passed, detail = check_link_inequality(np.random.default_rng(2), 100_000)
        self.assertTrue(passed, msg=detail)

    def test_round_trip(self):
        passed, detail = check_round_trip(np.random.default_rng(3), 100_000)
        self.assertTrue(passed, msg=detail)

    def test_distance_symmetry(self):
        passed, detail = check_distance_symmetry(np.random.default_rng(4), 100_000)
        self.assertTrue(passed, msg=detail)


class TestBattery(unittest.TestCase):
    """Test the whole battery"""

    def test_every_check_passes(self):
        results = run_selftest(seed=5)
        self.assertEqual([r.name for r in results], [name for name, _ in CHECKS])
        self.assertTrue(all(r.passed for r in results), msg=str([r for r in results if not r.passed]))


if __name__ == "__main__":
    unittest.main()
