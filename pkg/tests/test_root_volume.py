"""root system and volume tests"""
import math
import unittest

import numpy as np

from src.errors import DomainError
from src.geometry.lie_core import GroupSpec
from src.geometry.root_volume import (
    ChamberCone,
    _log_volume,
    asymptotic_fit,
    ball_volume,
    chamber_coordinates,
    closed_form_volume,
    cone_volume,
    density_xi,
    embed,
    log_ball_volume,
    root_system,
    volume_ratio,
)

SL2 = GroupSpec.sl(2)
SL2_SQUARED = GroupSpec.sl(2, 2)
SL3 = GroupSpec.sl(3)


class TestRootSystem(unittest.TestCase):
    """Test restricted root data"""

    def test_delta_values(self):
        self.assertAlmostEqual(root_system(SL2).delta, 1.0, places=12)
        self.assertAlmostEqual(root_system(SL2_SQUARED).delta, math.sqrt(2.0), places=12)
        self.assertAlmostEqual(root_system(SL3).delta, 2.0 * math.sqrt(2.0), places=12)

    def test_root_counts(self):
        self.assertEqual(len(root_system(SL2).positive_roots), 1)
        self.assertEqual(len(root_system(SL2_SQUARED).positive_roots), 2)
        self.assertEqual(len(root_system(SL3).positive_roots), 3)
        self.assertEqual(root_system(SL3).rank_r, 2)

    def test_barycenter_maximizes_two_rho(self):
        for spec in (SL2, SL2_SQUARED, SL3):
            rs = root_system(spec)
            bary = rs.barycenter_coords
            self.assertAlmostEqual(float(np.linalg.norm(bary)), 1.0, places=12)
            two_rho = rs.multiplicities @ rs.root_matrix
            self.assertAlmostEqual(float(two_rho @ bary), rs.delta, places=9)
            self.assertTrue(np.all(rs.simple_matrix @ bary > 0))
            if rs.rank_r == 2:
                phi = np.linspace(0.0, 2.0 * math.pi, 20001)
                circle = np.stack([np.cos(phi), np.sin(phi)], axis=1)
                self.assertLessEqual(float(np.max(circle @ two_rho)), rs.delta + 1e-6)

    def test_coordinates_round_trip(self):
        rs = root_system(SL3)
        c = np.array([0.3, -1.2])
        self.assertTrue(np.allclose(chamber_coordinates(rs, embed(rs, c)), c))
        # orthonormal: the norm in coordinates equals the group norm
        self.assertAlmostEqual(float(np.linalg.norm(c)), float(SL3.norm(embed(rs, c))), places=12)


class TestDensity(unittest.TestCase):
    """Test the haar density"""

    def test_rank_one_density_is_sinh(self):
        rs = root_system(SL2)
        for t in (0.5, 2.0, 7.0):
            self.assertAlmostEqual(density_xi(rs, np.array([t])), math.sinh(t), places=9)

    def test_zero_on_walls(self):
        rs = root_system(SL3)
        wall = rs.coweights[:, 0] * 2.0
        self.assertEqual(density_xi(rs, wall), 0.0)

    def test_outside_chamber_rejected(self):
        with self.assertRaises(DomainError):
            density_xi(root_system(SL2), np.array([-1.0]))


class TestBallVolume(unittest.TestCase):
    """Test ball volumes"""

    def test_rank_one_closed_form(self):
        rs = root_system(SL2)
        for T in (0.5, 3.0, 12.0):
            self.assertAlmostEqual(ball_volume(rs, T) / (math.cosh(T) - 1.0), 1.0, places=12)

    def test_rank_one_quadrature(self):
        rs = root_system(SL2)
        for T in (1.0, 6.0, 12.0):
            quad = math.exp(_log_volume(rs, T))
            self.assertLess(abs(quad / (math.cosh(T) - 1.0) - 1.0), 1e-10)

    def test_product_quadrature_matches_integral(self):
        rs = root_system(SL2_SQUARED)
        for T in (3.0, 8.0):
            self.assertLess(abs(ball_volume(rs, T) / closed_form_volume(rs, T) - 1.0), 1e-7)

    def test_monotone(self):
        rs = root_system(SL3)
        values = [ball_volume(rs, T) for T in (2.0, 4.0, 6.0)]
        self.assertTrue(values[0] < values[1] < values[2])

    def test_nonpositive_radius(self):
        with self.assertRaises(DomainError):
            ball_volume(root_system(SL2), 0.0)

    def test_log_volume_finite_for_large_T(self):
        value = log_ball_volume(root_system(SL2), 2000.0)
        self.assertTrue(math.isfinite(value))
        self.assertAlmostEqual(value, 2000.0 - math.log(2.0), places=9)


class TestAsymptotics(unittest.TestCase):
    """Test asymptotic fits and cone volumes"""

    def test_free_exponent_recovers_rank(self):
        for spec in (SL2_SQUARED, SL3):
            rs = root_system(spec)
            fit = asymptotic_fit(rs, [15.0, 20.0, 25.0, 30.0], free_exponent=True)
            self.assertLess(abs(fit.exponent - 0.5), 0.05, msg=str(spec.factors))

    def test_fixed_exponent_residuals_small(self):
        rs = root_system(SL2)
        fit = asymptotic_fit(rs, [15.0, 20.0, 25.0])
        self.assertAlmostEqual(fit.C_est, 0.5, places=6)
        self.assertLess(max(abs(r) for r in fit.residuals), 1e-6)

    def test_fit_grid_validation(self):
        rs = root_system(SL2)
        with self.assertRaises(DomainError):
            asymptotic_fit(rs, [5.0, 10.0])
        with self.assertRaises(DomainError):
            asymptotic_fit(rs, [5.0, 10.0, 15.0])
        with self.assertRaises(DomainError):
            asymptotic_fit(rs, [20.0, 15.0, 25.0])

    def test_cone_fills_ball(self):
        for spec in (SL2_SQUARED, SL3):
            rs = root_system(spec)
            ratio = cone_volume(rs, 30.0, 1.0) / ball_volume(rs, 30.0)
            self.assertLess(abs(ratio - 1.0), 0.01, msg=str(spec.factors))

    def test_cone_margin_shrinks_volume(self):
        rs = root_system(SL3)
        self.assertLess(cone_volume(rs, 6.0, 1.0), ball_volume(rs, 6.0))

    def test_subcone_must_hold_barycenter(self):
        rs = root_system(SL3)
        with self.assertRaises(DomainError):
            cone_volume(rs, 10.0, 0.0, ChamberCone((0.9, 0.0)))

    def test_volume_ratio(self):
        rs = root_system(SL2)
        self.assertEqual(volume_ratio(rs, 10.0, 0.0), 1.0)
        self.assertAlmostEqual(volume_ratio(rs, 30.0, 1.0), math.exp(-1.0), places=6)
        with self.assertRaises(DomainError):
            volume_ratio(rs, 10.0, 10.0)


if __name__ == "__main__":
    unittest.main()
