"""poincare series and patterson-sullivan tests"""
import math
import unittest

import numpy as np

from src.analysis.patterson_sullivan import (
    MAX_TAIL_FRACTION,
    DistanceProfile,
    critical_exponent,
    direction_concentration,
    dirichlet_sum,
    growth_constant,
    minimal_usable_s,
    poincare_partial,
    pole_order_check,
    ps_direction_histogram,
    ps_measure,
)
from src.errors import DomainError
from src.geometry.boundary import Arc
from src.lattice.enumeration import ProductOrbit, enumerate_lattice
from src.lattice.lattice_spec import LatticeSpec


def planted_profile(m: int, T: float) -> DistanceProfile:
    """distances log(1 + n/m), so N(t) = m (e^t - 1) exactly up to rounding"""
    n = np.arange(int(math.ceil(m * math.expm1(T))))
    dist = np.log1p(n / m)
    return DistanceProfile(dist[dist < T], T, 1.0)


class TestPlantedProfile(unittest.TestCase):
    """Test the series machinery on a profile with known growth"""

    @classmethod
    def setUpClass(cls):
        cls.m = 1000
        cls.profile = planted_profile(cls.m, 7.0)

    def test_growth_constant(self):
        self.assertLess(abs(growth_constant(self.profile, 7.0) / self.m - 1.0), 0.01)

    def test_corrected_series(self):
        for s in (1.5, 2.0, 3.0):
            ev = poincare_partial(self.profile, s)
            self.assertTrue(ev.usable)
            self.assertLess(abs((s - 1.0) * ev.corrected / self.m - 1.0), 0.01, msg=f"s={s}")

    def test_divergent_below_delta(self):
        ev = poincare_partial(self.profile, 0.9)
        self.assertTrue(ev.divergent)
        self.assertFalse(ev.usable)
        self.assertEqual(ev.tail_fraction, math.inf)

    def test_critical_exponent(self):
        profile = planted_profile(10, 10.0)
        self.assertAlmostEqual(critical_exponent(profile), 1.0, delta=0.01)

    def test_short_profile_rejected(self):
        with self.assertRaises(DomainError):
            critical_exponent(self.profile)

    def test_minimal_usable_s(self):
        s = minimal_usable_s(self.profile)
        self.assertGreater(s, 1.0)
        self.assertAlmostEqual(poincare_partial(self.profile, s).tail_fraction, MAX_TAIL_FRACTION, places=6)

    def test_distances_validated(self):
        with self.assertRaises(DomainError):
            DistanceProfile(np.array([0.5, 3.0]), 2.0, 1.0)

    def test_dirichlet_sum_thread_independent(self):
        dist = self.profile.dist
        self.assertEqual(dirichlet_sum(dist, 1.3), dirichlet_sum(dist, 1.3, threads=4))


class TestModularSeries(unittest.TestCase):
    """Test the series of PSL(2, Z)"""

    @classmethod
    def setUpClass(cls):
        cls.orbit = enumerate_lattice(LatticeSpec.psl2z(), 14.0)

    def test_critical_exponent(self):
        self.assertAlmostEqual(critical_exponent(self.orbit), 1.0, delta=0.1)

    def test_large_s_keeps_only_the_stabilizer(self):
        ev = poincare_partial(self.orbit, 50.0)
        self.assertAlmostEqual(ev.partial_sum, 2.0, places=6)

    def test_tail_small_at_1_2(self):
        ev = poincare_partial(self.orbit, 1.2, 14.0)
        self.assertLess(ev.tail_fraction, 0.10)

    def test_pole_series_stabilizes(self):
        """(s - 1) P(s) settles as s decreases toward 1"""
        entries = pole_order_check(self.orbit, [1.5, 1.35, 1.25, 1.2], 14.0)
        self.assertTrue(all(e.usable for e in entries))
        for current, following in zip(entries, entries[1:]):
            self.assertLess(abs(current.normalized / following.normalized - 1.0), 0.15, msg=f"s={current.s}")
        self.assertLess(abs(entries[-1].normalized - entries[-2].normalized),
                        abs(entries[0].normalized - entries[1].normalized))

    def test_pole_grid_must_descend(self):
        with self.assertRaises(DomainError):
            pole_order_check(self.orbit, [1.2, 1.5])

    def test_half_circles_balance(self):
        """S fixes i and turns every visual angle by pi"""
        measure = ps_measure(self.orbit, 1.2, Arc.equal_partition(2), interior_cutoff=0.5)
        self.assertAlmostEqual(measure.total, 1.0, places=12)
        self.assertAlmostEqual(measure.weights[1], measure.weights[2], places=9)

    def test_measure_flattens_as_s_drops(self):
        arcs = Arc.equal_partition(8)

        def deviation(s):
            measure = ps_measure(self.orbit, s, arcs, interior_cutoff=0.5)
            boundary = measure.weights[1:] / measure.weights[1:].sum()
            return float(np.max(np.abs(8.0 * boundary - 1.0)))

        self.assertLess(deviation(1.2), deviation(2.0))

    def test_interior_mass_drains(self):
        arcs = Arc.equal_partition(8)
        near = ps_measure(self.orbit, 1.2, arcs, interior_cutoff=3.0)
        far = ps_measure(self.orbit, 1.5, arcs, interior_cutoff=3.0)
        self.assertEqual(near.bins[0].id, "interior")
        self.assertLess(near.weights[0], far.weights[0])

    def test_unusable_s_refused(self):
        with self.assertRaises(DomainError):
            ps_measure(self.orbit, 1.01, Arc.equal_partition(4))

    def test_other_base(self):
        measure = ps_measure(self.orbit, 1.5, Arc.equal_partition(4), base=2j, T_max=12.0)
        self.assertAlmostEqual(measure.total, 1.0, places=12)


class TestProductDirections(unittest.TestCase):
    """Test the product-group direction histogram"""

    @classmethod
    def setUpClass(cls):
        cls.orbit = ProductOrbit.build(LatticeSpec.product(), 8.0)

    def test_concentrates_as_s_drops(self):
        near = ps_direction_histogram(self.orbit, 1.6, 16)
        far = ps_direction_histogram(self.orbit, 3.0, 16)
        self.assertAlmostEqual(near.total, 1.0, places=12)
        self.assertGreater(direction_concentration(near), direction_concentration(far))

    def test_s_at_delta_rejected(self):
        with self.assertRaises(DomainError):
            ps_direction_histogram(self.orbit, math.sqrt(2.0), 8)

    def test_rank_one_measure_rejects_products(self):
        with self.assertRaises(DomainError):
            ps_measure(enumerate_lattice(LatticeSpec.product(), 3.0), 2.0, Arc.equal_partition(4))


if __name__ == "__main__":
    unittest.main()
