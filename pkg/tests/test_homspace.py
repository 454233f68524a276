"""modular surface tests"""
import math
import unittest

import numpy as np
from scipy import stats

from src.errors import DomainError, InvalidInputError
from src.geometry.boundary import Arc
from src.geometry.lie_core import GroupElement, GroupSpec, random_element
from src.lattice.enumeration import enumerate_lattice
from src.lattice.homspace import (
    DOMAIN_AREA,
    DOMAIN_FLOOR,
    FundamentalDomainBins,
    SamplingBox,
    area_below,
    b_coordinates,
    b_element,
    haar_radial_cdf,
    haar_radial_sample,
    in_domain,
    mobius,
    reduce,
    reduce_points,
    rho_box_mass,
    right_translate,
    solvable_sweep,
    translate_equidistribution,
)
from src.lattice.lattice_spec import LatticeSpec

SL2 = GroupSpec.sl(2)


def same_reduced_point(z, w, tolerance=1e-8):
    """equal, or identified across the domain boundary"""
    if abs(z - w) < tolerance:
        return True
    on_side = abs(abs(z.real) - 0.5) < tolerance and abs(z.imag - w.imag) < tolerance
    on_arc = abs(abs(z) - 1.0) < tolerance and abs(z + w.conjugate()) < tolerance
    return on_side or on_arc


class TestReduction(unittest.TestCase):
    """Test reduction into the standard domain"""

    def test_reduce_group_elements(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            g = random_element(SL2, rng)
            point = reduce(g)
            self.assertTrue(bool(in_domain(point.z)))
            self.assertLess(np.max(np.abs(point.word_matrix @ g.matrix - point.rep.matrix)), 1e-9)
            self.assertEqual(round(np.linalg.det(point.word_matrix)), 1)
            self.assertLess(abs(complex(mobius(point.rep.matrix, 1j)) - point.z), 1e-9)
            self.assertTrue(point.rep.matrix[1, 1] >= 0)

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(1)
        elements = [random_element(SL2, rng) for _ in range(200)]
        z = np.array([complex(mobius(g.matrix, 1j)) for g in elements])
        for value, g in zip(reduce_points(z), elements):
            self.assertTrue(same_reduced_point(value, reduce(g).z))

    def test_lattice_invariance(self):
        rng = np.random.default_rng(2)
        gammas = enumerate_lattice(LatticeSpec.psl2z(), 6.0).gammas[1:].astype(float)
        z = rng.uniform(-3, 3, len(gammas)) + 1j * np.exp(rng.uniform(-2, 1, len(gammas)))
        moved = np.array([complex(mobius(m.reshape(2, 2), w)) for m, w in zip(gammas, z)])
        for a, b in zip(reduce_points(z), reduce_points(moved)):
            self.assertTrue(same_reduced_point(a, b, 1e-7), msg=f"{a} vs {b}")

    def test_lower_half_plane_rejected(self):
        with self.assertRaises(DomainError):
            reduce_points([0.3 - 1j])

    def test_reduce_needs_sl2(self):
        with self.assertRaises(InvalidInputError):
            reduce(GroupElement.identity(GroupSpec.sl(3)))


class TestBins(unittest.TestCase):
    """Test the fundamental-domain partition"""

    def test_area_formula(self):
        self.assertEqual(area_below(DOMAIN_FLOOR), 0.0)
        self.assertAlmostEqual(area_below(1.0), DOMAIN_AREA - 1.0, places=12)
        self.assertAlmostEqual(area_below(1.0 - 1e-9), DOMAIN_AREA - 1.0, places=6)
        self.assertAlmostEqual(area_below(1e9), DOMAIN_AREA, places=8)

    def test_equal_area_bands(self):
        bins = FundamentalDomainBins.equal_area(10, 4.0)
        self.assertEqual(len(bins), 21)
        self.assertAlmostEqual(float(bins.expected.sum()), 1.0, places=12)
        bands = bins.areas[:-1]
        self.assertTrue(np.allclose(bands, bands[0], rtol=1e-9))
        # about a quarter of the mass sits above height 4
        self.assertAlmostEqual(bins.expected[-1], 3.0 / (4.0 * math.pi), places=12)

    def test_assign(self):
        bins = FundamentalDomainBins.equal_area(4, 3.0, split_halves=False)
        self.assertEqual(int(bins.assign(np.array([0.1 + 10j]))[0]), bins.cusp_index)
        self.assertEqual(int(bins.assign(np.array([0.4 + 0.95j]))[0]), 0)

    def test_edges_must_start_at_floor(self):
        with self.assertRaises(DomainError):
            FundamentalDomainBins(np.array([1.0, 2.0]))
        with self.assertRaises(DomainError):
            FundamentalDomainBins.equal_area(0)


class TestTranslates(unittest.TestCase):
    """Test equidistribution of K-arc translates"""

    @classmethod
    def setUpClass(cls):
        cls.bins = FundamentalDomainBins.equal_area(10, 4.0)
        cls.steps = translate_equidistribution(
            GroupElement.identity(SL2), [(1.0, -1.0), (2.0, -2.0), (4.0, -4.0)],
            Arc.full(), cls.bins, samples=200_000, seed=3,
        )

    def test_large_margin_equidistributes(self):
        self.assertEqual([s.margin for s in self.steps], [2.0, 4.0, 8.0])
        self.assertLess(self.steps[-1].max_deviation, 0.10)
        self.assertLess(self.steps[-1].max_deviation, self.steps[0].max_deviation)

    def test_partial_arc(self):
        steps = translate_equidistribution(
            GroupElement.identity(SL2), [(4.0, -4.0)], Arc(0.3, 1.1), self.bins, samples=200_000, seed=4,
        )
        self.assertLess(steps[0].max_deviation, 0.10)

    def test_seeded(self):
        again = translate_equidistribution(
            GroupElement.identity(SL2), [(1.0, -1.0)], Arc.full(), self.bins, samples=10_000, seed=5,
        )
        once = translate_equidistribution(
            GroupElement.identity(SL2), [(1.0, -1.0)], Arc.full(), self.bins, samples=10_000, seed=5,
        )
        self.assertTrue(np.array_equal(again[0].measure.weights, once[0].measure.weights))

    def test_margins_validated(self):
        identity = GroupElement.identity(SL2)
        with self.assertRaises(DomainError):
            translate_equidistribution(identity, [(2.0, -2.0), (1.0, -1.0)], Arc.full(), self.bins, 10)
        with self.assertRaises(DomainError):
            translate_equidistribution(identity, [(-1.0, 1.0)], Arc.full(), self.bins, 10)

    def test_wall_step_has_no_claim(self):
        steps = translate_equidistribution(GroupElement.identity(SL2), [(0.0, 0.0)], Arc.full(), self.bins, 1000)
        self.assertFalse(steps[0].claimed)


class TestRightHaar(unittest.TestCase):
    """Test the solvable group and its right haar measure"""

    def test_coordinates_round_trip(self):
        t, u = b_coordinates(b_element(1.3, -0.7))
        self.assertAlmostEqual(t, 1.3, places=12)
        self.assertAlmostEqual(u, -0.7, places=12)
        with self.assertRaises(DomainError):
            b_coordinates(GroupElement.from_matrix([[1.0, 0.0], [1.0, 1.0]]))

    def test_right_translate_matches_product(self):
        product = b_element(0.4, 1.5) @ b_element(-1.1, 0.3)
        t, u = right_translate(0.4, 1.5, -1.1, 0.3)
        self.assertLess(product.max_abs_diff(b_element(t, u)), 1e-12)

    def test_box_mass_invariant_under_right_translation(self):
        lo_t, hi_t, lo_u, hi_u = -0.5, 0.7, -0.2, 0.4
        t0, u0 = 1.3, -2.0
        (a, c), (b, d) = right_translate(lo_t, lo_u, t0, u0), right_translate(hi_t, hi_u, t0, u0)
        self.assertAlmostEqual(rho_box_mass(lo_t, hi_t, lo_u, hi_u), rho_box_mass(a, b, c, d), places=12)

    def test_sampled_box_fractions(self):
        box = SamplingBox(20.0)
        rng = np.random.default_rng(6)
        n = 400_000
        t, u = box.sample(n, rng)
        for lo_t, hi_t, lo_u, hi_u in ((-1.0, 0.0, -0.5, 0.5), (0.5, 2.0, 0.0, 1.0), (-2.0, 2.0, -1.0, -0.2)):
            p = rho_box_mass(lo_t, hi_t, lo_u, hi_u) / box.mass
            observed = np.count_nonzero((t >= lo_t) & (t < hi_t) & (u >= lo_u) & (u < hi_u)) / n
            z = (observed - p) / math.sqrt(p * (1 - p) / n)
            self.assertLess(abs(z), 4.5)

    def test_radial_law(self):
        T = 5.0
        sample = haar_radial_sample(T, 200_000, seed=7)
        result = stats.kstest(sample, lambda r: haar_radial_cdf(r, T))
        self.assertGreater(result.pvalue, 1e-3)


class TestSolvableSweep(unittest.TestCase):
    """Test solvable sweeps on the modular surface"""

    @classmethod
    def setUpClass(cls):
        cls.bins = FundamentalDomainBins.equal_area(10, 4.0)
        cls.sweep = solvable_sweep(
            GroupElement.identity(SL2), 14.0, Arc(0.0, math.pi), cls.bins, samples=400_000, seed=8,
        )

    def test_equidistributes(self):
        self.assertLess(self.sweep.max_deviation, 0.12)

    def test_half_circle_ratio(self):
        self.assertLess(abs(self.sweep.ratio / 0.5 - 1.0), 0.10)
        self.assertEqual(self.sweep.omega_measure, 0.5)

    def test_rho_mass_tracks_ball_volume(self):
        self.assertLess(abs(self.sweep.rho_mass_full / (math.cosh(14.0) - 1.0) - 1.0), 0.02)

    def test_restricted(self):
        smaller = self.sweep.restricted(10.0)
        self.assertTrue(np.all(smaller.dists < 10.0))
        with self.assertRaises(DomainError):
            self.sweep.restricted(15.0)

    def test_rejects_higher_rank(self):
        with self.assertRaises(InvalidInputError):
            solvable_sweep(GroupElement.identity(GroupSpec.sl(3)), 5.0, Arc.full(), self.bins, 10)


if __name__ == "__main__":
    unittest.main()
