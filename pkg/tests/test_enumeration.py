"""lattice enumeration tests"""
import math
import unittest

import numpy as np

from src.errors import DomainError, MissingCacheError, ResourceLimitError
from src.geometry.lie_core import GroupElement, sl2_distances
from src.lattice.enumeration import (
    PRODUCT_CAP,
    RANK_ONE_CAP,
    ProductOrbit,
    enumerate_lattice,
    extended_gcd,
    naive_sweep,
    stabilizer_order,
    stream_count_product,
    unimodular_sweep,
)
from src.lattice.lattice_spec import LatticeKind, LatticeSpec, covolume, lattice_index, membership_mask


def as_set(rows):
    return {tuple(r) for r in np.asarray(rows).tolist()}


class TestExtendedGcd(unittest.TestCase):
    """Test the vectorized euclid"""

    def test_bezout(self):
        rng = np.random.default_rng(0)
        x = rng.integers(-500, 500, 2000)
        y = rng.integers(-500, 500, 2000)
        g, s, t = extended_gcd(x, y)
        self.assertTrue(np.array_equal(g, np.gcd(x, y)))
        self.assertTrue(np.array_equal(s * x + t * y, g))


class TestCompleteness(unittest.TestCase):
    """Test enumeration against the brute-force sweep"""

    def test_psl2z_matches_naive_sweep(self):
        for T in (0.5, 2.0, 4.0, 6.0):
            orbit = enumerate_lattice(LatticeSpec.psl2z(), T)
            self.assertEqual(as_set(orbit.gammas), as_set(naive_sweep(T)), msg=f"T={T}")
            self.assertEqual(len(orbit), len(as_set(orbit.gammas)))

    def test_threads_do_not_change_result(self):
        serial = enumerate_lattice(LatticeSpec.psl2z(), 8.0)
        threaded = enumerate_lattice(LatticeSpec.psl2z(), 8.0, threads=4)
        self.assertTrue(np.array_equal(serial.gammas, threaded.gammas))
        self.assertTrue(np.array_equal(serial.dist, threaded.dist))

    def test_sorted_and_inside(self):
        orbit = enumerate_lattice(LatticeSpec.psl2z(), 7.0)
        self.assertTrue(np.all(np.diff(orbit.dist) >= 0))
        self.assertTrue(np.all(orbit.dist < 7.0))
        self.assertTrue(np.allclose(orbit.dist, sl2_distances(orbit.gammas.astype(float)), atol=1e-9))

    def test_canonical_sign(self):
        g = enumerate_lattice(LatticeSpec.psl2z(), 6.0).gammas
        self.assertTrue(np.all((g[:, 0] > 0) | ((g[:, 0] == 0) & (g[:, 1] > 0))))
        self.assertTrue(np.all(g[:, 0] * g[:, 3] - g[:, 1] * g[:, 2] == 1))

    def test_zero_radius_is_empty(self):
        self.assertEqual(len(enumerate_lattice(LatticeSpec.psl2z(), 0.0)), 0)

    def test_congruence_subgroups_filter_the_sweep(self):
        sweep = naive_sweep(6.0)
        for kind, level in ((LatticeKind.gamma0, 2), (LatticeKind.gamma0, 5), (LatticeKind.gamma, 3)):
            lat = LatticeSpec(kind, level)
            expected = as_set(sweep[membership_mask(lat, sweep)])
            self.assertEqual(as_set(enumerate_lattice(lat, 6.0).gammas), expected, msg=f"{kind.value}({level})")

    def test_conjugated_lattice(self):
        conj = GroupElement.from_matrix([[2.0, 0.0], [0.0, 0.5]])
        lat = LatticeSpec.psl2z(conj)
        orbit = enumerate_lattice(lat, 4.0)
        wide = naive_sweep(5.5)
        h = (conj.matrix[None, :, :] @ wide.astype(float).reshape(-1, 2, 2)).reshape(-1, 4)
        expected = as_set(wide[sl2_distances(h) < 4.0])
        self.assertEqual(as_set(orbit.gammas), expected)


class TestGrowth(unittest.TestCase):
    """Test counts against the volume prediction"""

    @classmethod
    def setUpClass(cls):
        cls.orbit = enumerate_lattice(LatticeSpec.psl2z(), 12.0)

    def test_count_tracks_volume(self):
        for T, tolerance in ((10.0, 0.10), (12.0, 0.05)):
            predicted = (math.cosh(T) - 1.0) / covolume(LatticeSpec.psl2z())
            self.assertLess(abs(self.orbit.count_below(T) / predicted - 1.0), tolerance, msg=f"T={T}")

    def test_restrict_is_prefix(self):
        small = self.orbit.restrict(6.0)
        direct = enumerate_lattice(LatticeSpec.psl2z(), 6.0)
        self.assertTrue(np.array_equal(small.gammas, direct.gammas))
        with self.assertRaises(DomainError):
            self.orbit.count_below(13.0)

    def test_index_scales_counts(self):
        """Gamma0(2) has index 3, so a third of the elements"""
        sub = enumerate_lattice(LatticeSpec(LatticeKind.gamma0, 2), 12.0)
        self.assertEqual(lattice_index(sub.lattice), 3)
        self.assertLess(abs(3 * len(sub) / len(self.orbit) - 1.0), 0.05)

    def test_arrays_are_read_only(self):
        with self.assertRaises(ValueError):
            self.orbit.dist[0] = 1.0


class TestCaps(unittest.TestCase):
    """Test resource limits"""

    def test_rank_one_cap(self):
        with self.assertRaises(ResourceLimitError):
            enumerate_lattice(LatticeSpec.psl2z(), RANK_ONE_CAP + 0.5)

    def test_product_cap(self):
        with self.assertRaises(ResourceLimitError):
            enumerate_lattice(LatticeSpec.product(), PRODUCT_CAP + 0.5)

    def test_sweep_bound(self):
        with self.assertRaises(ResourceLimitError):
            unimodular_sweep(1e13)

    def test_negative_radius(self):
        with self.assertRaises(DomainError):
            enumerate_lattice(LatticeSpec.psl2z(), -1.0)


class TestStabilizer(unittest.TestCase):
    """Test stabilizer orders"""

    def test_psl2z_at_i(self):
        self.assertEqual(stabilizer_order(LatticeSpec.psl2z()), 2)

    def test_generic_point_is_free(self):
        conj = GroupElement.from_matrix([[1.3, 0.4], [0.0, 1.0 / 1.3]])
        self.assertEqual(stabilizer_order(LatticeSpec.psl2z(conj)), 1)

    def test_product_multiplies(self):
        self.assertEqual(stabilizer_order(LatticeSpec.product()), 4)


class TestProduct(unittest.TestCase):
    """Test streamed product counting"""

    @classmethod
    def setUpClass(cls):
        cls.lat = LatticeSpec.product()
        cls.stream = ProductOrbit.build(cls.lat, 6.0)

    def test_stream_matches_materialized(self):
        full = enumerate_lattice(self.lat, 6.0)
        self.assertEqual(self.stream.count(6.0), len(full))
        self.assertTrue(np.allclose(full.dist, np.hypot(full.factor_dists[:, 0], full.factor_dists[:, 1])))

    def test_small_batches_agree(self):
        self.assertEqual(self.stream.count(6.0, max_pairs=500), self.stream.count(6.0))
        self.assertEqual(self.stream.count(6.0, threads=3), self.stream.count(6.0))

    def test_predicate(self):
        both_small = stream_count_product(
            self.lat, 6.0, lambda batch: (batch.factor_dist(0) < 3.0) & (batch.factor_dist(1) < 3.0),
            factors=[self.stream.first, self.stream.second],
        )
        n1 = self.stream.first.count_below(3.0)
        n2 = self.stream.second.count_below(3.0)
        # every pair with both factors below 3 lies in the ball of radius 6
        self.assertEqual(both_small, n1 * n2)

    def test_missing_factors(self):
        with self.assertRaises(MissingCacheError):
            stream_count_product(self.lat, 6.0)
        with self.assertRaises(MissingCacheError):
            ProductOrbit.from_factors(self.lat, [self.stream.first])
        with self.assertRaises(MissingCacheError):
            self.stream.count(7.0)


if __name__ == "__main__":
    unittest.main()
