"""counting experiment tests"""
import math
import unittest

import numpy as np

from src.analysis.empirical import BinSpec, CountReport, EmpiricalMeasure
from src.analysis.experiments import (
    asymmetry_probe,
    assign_arcs,
    count_ball,
    count_bisector,
    count_boundary,
    count_joint,
    count_product_joint,
    count_sector,
    sector_reach,
    validate_partition,
)
from src.errors import DomainError, MissingDecorationError
from src.geometry.boundary import Arc, BoundaryPoint
from src.geometry.lie_core import GroupElement
from src.lattice.enumeration import ProductOrbit, enumerate_lattice
from src.lattice.lattice_spec import LatticeSpec

QUARTER = math.pi / 2


class TestPartitions(unittest.TestCase):
    """Test arc partitions and binning"""

    def test_equal_partition_accepted(self):
        arcs = Arc.equal_partition(6, offset=1.0)
        self.assertEqual(len(validate_partition(arcs)), 6)

    def test_gap_rejected(self):
        with self.assertRaises(DomainError):
            validate_partition([Arc(0.0, 1.0), Arc(1.5, 0.0)])

    def test_overlap_rejected(self):
        with self.assertRaises(DomainError):
            validate_partition([Arc(0.0, 4.0), Arc(3.0, 0.5), Arc(0.5, 0.0)])

    def test_assign_matches_contains(self):
        arcs = validate_partition(Arc.equal_partition(5, offset=2.0))
        theta = np.random.default_rng(0).uniform(-10, 10, 5000)
        labels = assign_arcs(theta, arcs)
        for k, arc in enumerate(arcs):
            self.assertTrue(np.array_equal(labels == k, arc.contains(theta)))


class TestEmpirical(unittest.TestCase):
    """Test measures and reports"""

    def test_merge(self):
        bins = (BinSpec("a", 0, 1), BinSpec("b", 1, 2))
        merged = EmpiricalMeasure.from_indices(bins, [0, 0, 1]).merge(EmpiricalMeasure.from_indices(bins, [1]))
        self.assertTrue(np.array_equal(merged.weights, [2.0, 2.0]))
        with self.assertRaises(DomainError):
            merged.merge(EmpiricalMeasure.empty(bins[:1]))

    def test_report_csv(self):
        report = CountReport(1.0, (BinSpec("x", 0, 1),), [3], [2.0])
        lines = report.to_csv().splitlines()
        self.assertEqual(lines[0], "bin_id,lo,hi,observed,predicted,ratio")
        self.assertEqual(lines[1], "x,0.0,1.0,3,2.0,1.5")
        self.assertAlmostEqual(report.global_relative_error, 0.5)

    def test_unreliable_flag(self):
        report = CountReport(1.0, (BinSpec("x", 0, 1),), [0], [0.3])
        self.assertFalse(report.reliable)


class TestRankOneCounts(unittest.TestCase):
    """Test counting laws on PSL(2, Z)"""

    @classmethod
    def setUpClass(cls):
        cls.cusp = BoundaryPoint.cusp()
        cls.orbit = enumerate_lattice(LatticeSpec.psl2z(), 12.0).with_boundary(cls.cusp)

    def test_ball(self):
        self.assertLess(count_ball(self.orbit, 12.0).global_relative_error, 0.05)
        self.assertLess(count_ball(self.orbit, 10.0).global_relative_error, 0.10)

    def test_sector_ratios(self):
        report = count_sector(self.orbit, Arc.equal_partition(8), 12.0)
        self.assertTrue(np.all((report.ratio > 0.9) & (report.ratio < 1.1)), msg=str(report.ratio))
        self.assertEqual(int(report.observed.sum()), self.orbit.count_below(12.0))

    def test_sector_from_other_base(self):
        """the ball is centred at the base, so the orbit must reach T + d(i, 2i)"""
        self.assertAlmostEqual(sector_reach(2j, 11.0), 11.0 + math.log(2.0), places=12)
        for arcs in (Arc.equal_partition(4, offset=0.3), Arc.equal_partition(8)):
            report = count_sector(self.orbit, arcs, 11.0, base=2j)
            self.assertTrue(np.all((report.ratio > 0.85) & (report.ratio < 1.15)), msg=str(report.ratio))
            self.assertLess(report.global_relative_error, 0.10)

    def test_sector_from_translated_base(self):
        """z -> z + 1 lies in the lattice and carries the picture at i to the one at 1 + i"""
        arcs = Arc.equal_partition(8, offset=0.3)
        at_origin = count_sector(self.orbit, arcs, 10.0)
        translated = count_sector(self.orbit, arcs, 10.0, base=1 + 1j)
        self.assertEqual(int(translated.observed.sum()), self.orbit.count_below(10.0))
        self.assertLessEqual(int(np.max(np.abs(translated.observed - at_origin.observed))), 2)

    def test_sector_base_needs_enough_orbit(self):
        with self.assertRaises(DomainError):
            count_sector(self.orbit, Arc.equal_partition(4), 12.0, base=2j)

    def test_ratios_improve_with_T(self):
        """max |ratio - 1| shrinks from T=8 to T=12 in most layouts"""
        offsets = [float(o) for o in np.random.default_rng(12).uniform(0.0, 2 * math.pi, 4)]
        experiments = {
            "sector": lambda o, T: count_sector(self.orbit, Arc.equal_partition(8, offset=o), T),
            "boundary": lambda o, T: count_boundary(self.orbit, self.cusp, Arc.equal_partition(8, offset=o), T),
            "joint": lambda o, T: count_joint(
                self.orbit, self.cusp, Arc.equal_partition(4, offset=o), Arc.equal_partition(4, offset=o + 0.2), T,
            ),
        }
        for name, run in experiments.items():
            improved = sum(run(o, 12.0).max_deviation < run(o, 8.0).max_deviation for o in offsets)
            self.assertGreaterEqual(improved, 3, msg=name)

    def test_full_circle_sector_is_ball(self):
        report = count_sector(self.orbit, [Arc.full()], 9.0)
        self.assertEqual(int(report.observed[0]), int(count_ball(self.orbit, 9.0).observed[0]))

    def test_point_mode_divides_by_stabilizer(self):
        arcs = Arc.equal_partition(8)
        gamma = count_sector(self.orbit, arcs, 10.0)
        point = count_sector(self.orbit, arcs, 10.0, mode="point")
        self.assertEqual(point.stabilizer_order, 2)
        self.assertTrue(np.array_equal(point.observed * 2, gamma.observed))
        self.assertTrue(np.allclose(point.predicted * 2, gamma.predicted))

    def test_unknown_mode(self):
        with self.assertRaises(DomainError):
            count_sector(self.orbit, Arc.equal_partition(2), 5.0, mode="both")

    def test_boundary_ratios(self):
        report = count_boundary(self.orbit, self.cusp, Arc.equal_partition(8), 12.0)
        self.assertTrue(np.all((report.ratio > 0.85) & (report.ratio < 1.15)), msg=str(report.ratio))

    def test_boundary_needs_decoration(self):
        bare = enumerate_lattice(LatticeSpec.psl2z(), 4.0)
        with self.assertRaises(MissingDecorationError):
            count_boundary(bare, self.cusp, Arc.equal_partition(4), 4.0)
        with self.assertRaises(MissingDecorationError):
            count_boundary(self.orbit, BoundaryPoint(1.0), Arc.equal_partition(4), 4.0)

    def test_joint_grid_and_marginals(self):
        sectors, boundaries = Arc.equal_partition(4), Arc.equal_partition(4, offset=0.5)
        joint = count_joint(self.orbit, self.cusp, sectors, boundaries, 12.0)
        self.assertEqual(joint.shape, (4, 4))
        self.assertTrue(np.all((joint.ratio > 0.8) & (joint.ratio < 1.2)), msg=str(joint.ratio))

        sector = count_sector(self.orbit, sectors, 12.0)
        boundary = count_boundary(self.orbit, self.cusp, boundaries, 12.0)
        self.assertTrue(np.array_equal(joint.marginal(0, sector.bins).observed, sector.observed))
        self.assertTrue(np.array_equal(joint.marginal(1, boundary.bins).observed, boundary.observed))

    def test_monotone_in_T(self):
        arcs = Arc.equal_partition(8)
        small = count_sector(self.orbit, arcs, 8.0).observed
        large = count_sector(self.orbit, arcs, 12.0).observed
        self.assertTrue(np.all(small <= large))

    def test_sharding_is_exact(self):
        arcs = Arc.equal_partition(8)
        serial = count_joint(self.orbit, self.cusp, arcs, arcs, 11.0)
        sharded = count_joint(self.orbit, self.cusp, arcs, arcs, 11.0, threads=5)
        self.assertTrue(np.array_equal(serial.observed, sharded.observed))

    def test_bisector_quarters(self):
        report = count_bisector(self.orbit, Arc(0.0, QUARTER), Arc(QUARTER / 2, 3 * QUARTER / 2), 12.0)
        self.assertLess(report.global_relative_error, 0.15)

    def test_bisector_full_is_ball(self):
        report = count_bisector(self.orbit, Arc.full(), Arc.full(), 10.0)
        self.assertEqual(int(report.observed[0]), self.orbit.count_below(10.0))

    def test_asymmetry_series_rejects_rank_one(self):
        with self.assertRaises(DomainError):
            asymmetry_probe(self.orbit, Arc.full(), Arc.full(), [5.0])


class TestConjugatedBoundary(unittest.TestCase):
    """Test boundary counts seen from a shifted basepoint"""

    def test_boundary_ratios(self):
        conj = GroupElement.from_matrix([[2.0, 0.0], [0.0, 0.5]])
        cusp = BoundaryPoint.cusp()
        orbit = enumerate_lattice(LatticeSpec.psl2z(conj), 12.0).with_boundary(cusp)
        report = count_boundary(orbit, cusp, Arc.equal_partition(4), 12.0)
        self.assertTrue(np.all((report.ratio > 0.85) & (report.ratio < 1.15)), msg=str(report.ratio))


class TestProductCounts(unittest.TestCase):
    """Test streamed counting on the product lattice"""

    @classmethod
    def setUpClass(cls):
        cls.orbit = ProductOrbit.build(LatticeSpec.product(), 8.0)

    def test_ball(self):
        self.assertLess(count_ball(self.orbit, 8.0).global_relative_error, 0.20)

    def test_bisector_box(self):
        quarter = (Arc(0.0, QUARTER), Arc(0.0, QUARTER))
        report = count_bisector(self.orbit, quarter, (Arc.full(), Arc.full()), 8.0)
        self.assertLess(report.global_relative_error, 0.25)

    def test_bisector_half_boxes(self):
        half = (Arc(0.0, math.pi), Arc(0.0, math.pi))
        report = count_bisector(self.orbit, half, half, 8.0)
        self.assertGreater(int(report.observed[0]), 0)
        self.assertLess(report.global_relative_error, 0.25)

    def test_box_needs_one_arc_per_factor(self):
        with self.assertRaises(DomainError):
            count_bisector(self.orbit, Arc.full(), Arc.full(), 8.0)

    def test_rank_one_experiments_reject_products(self):
        with self.assertRaises(DomainError):
            count_sector(self.orbit, Arc.equal_partition(4), 5.0)

    def test_product_joint_needs_decoration(self):
        with self.assertRaises(MissingDecorationError):
            count_product_joint(self.orbit, (Arc.full(), Arc.full()), (Arc.full(), Arc.full()), 6.0)

    def test_full_boxes_reproduce_the_ball(self):
        cusp = BoundaryPoint.cusp()
        decorated = self.orbit.with_boundary((cusp, cusp))
        full = (Arc.full(), Arc.full())
        series = asymmetry_probe(decorated, full, full, [5.0, 6.0])
        self.assertTrue(np.allclose(series.correct_ratio, 1.0))
        self.assertTrue(np.allclose(series.swapped_ratio, 1.0))
        joint = count_product_joint(decorated, full, full, 6.0)
        self.assertEqual(int(joint.observed[0]), self.orbit.count(6.0))


if __name__ == "__main__":
    unittest.main()
