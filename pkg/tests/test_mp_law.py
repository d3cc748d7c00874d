"""
Unit tests for the Stieltjes transform, density and support of the limiting spectral law
"""
import unittest
import os

import numpy as np
from scipy.integrate import trapezoid

import sys
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from sscm_spectra.exceptions import ContractViolation
from sscm_spectra.moments import GAMMA, MomentVector, gamma_to_beta
from sscm_spectra.mp_law import BRENTQ_RTOL, SupportIntervals, density_eval, stieltjes_solve, support_find
from sscm_spectra.psd import DiscretePSD
from sscm_spectra.sampling import RadiusLaw, ShapeSpectrum, replication_rng, sample_elliptical, sscm_from


def mp_density(x, c):
    """Marchenko-Pastur density of the continuous part"""
    lo, hi = (1 - np.sqrt(c)) ** 2, (1 + np.sqrt(c)) ** 2
    x = np.asarray(x, dtype=float)
    inside = (x > lo) & (x < hi)
    values = np.zeros_like(x)
    values[inside] = np.sqrt((hi - x[inside]) * (x[inside] - lo)) / (2 * np.pi * c * x[inside])
    return values


class TestStieltjesSolve(unittest.TestCase):
    """Test the Stieltjes transform solver"""

    def setUp(self):
        """Set up test fixtures"""
        self.delta = DiscretePSD.delta_one()
        self.model1 = DiscretePSD([0.5, 1.5], [0.5, 0.5])

    def test_spherical_density_at_one(self):
        """Test Im m(1 + i eps) / pi = sqrt(3) / (2 pi) for delta_1 and c = 1"""
        point = stieltjes_solve(1.0 + 1e-9j, self.delta, 1.0)
        self.assertAlmostEqual(point.density, np.sqrt(3) / (2 * np.pi), places=6)
        self.assertLessEqual(point.residual, 1e-12)

    def test_zero_ratio(self):
        """Test m(z) = integral dH / (t - z) when c = 0"""
        z = 0.7 + 0.3j
        point = stieltjes_solve(z, self.model1, 0.0)
        expected = 0.5 / (0.5 - z) + 0.5 / (1.5 - z)
        self.assertAlmostEqual(abs(point.m - expected), 0.0, places=14)

    def test_solution_class_and_equations(self):
        """Test Im m >= 0, the companion relation and both defining equations"""
        psd, c = DiscretePSD([0.2, 1.0, 1.8], [0.3, 0.4, 0.3]), 2.0
        for z in (0.1 + 1e-3j, 1.0 + 1e-6j, 3.0 + 0.5j, -2.0 + 1e-2j, 10.0 + 1e-8j):
            point = stieltjes_solve(z, psd, c)
            self.assertGreaterEqual(point.m.imag, -1e-12)
            self.assertGreaterEqual(point.m_under.imag, -1e-12)
            self.assertAlmostEqual(abs(point.m_under - (c * point.m - (1 - c) / z)), 0.0, places=10)
            rhs = np.sum(psd.weights / (psd.atoms * (1 - c - c * z * point.m) - z))
            self.assertLessEqual(abs(point.m - rhs) / max(1.0, abs(point.m)), 1e-12)
            mu = point.m_under
            z_back = -1 / mu + c * np.sum(psd.weights * psd.atoms / (1 + psd.atoms * mu))
            self.assertLessEqual(abs(z_back - z) / max(1.0, abs(z)), 1e-9)

    def test_upper_half_plane_required(self):
        """Test that real or lower half-plane points are refused"""
        with self.assertRaises(ContractViolation):
            stieltjes_solve(1.0, self.delta, 1.0)
        with self.assertRaises(ContractViolation):
            stieltjes_solve(1.0 - 1j, self.delta, 1.0)


class TestDensity(unittest.TestCase):
    """Test density evaluation"""

    def setUp(self):
        """Set up test fixtures"""
        self.delta = DiscretePSD.delta_one()
        self.model1 = DiscretePSD([0.5, 1.5], [0.5, 0.5])

    def test_matches_marchenko_pastur(self):
        """Test delta_1 densities against the closed form"""
        for c in (0.25, 1.0, 2.0):
            lo, hi = (1 - np.sqrt(c)) ** 2, (1 + np.sqrt(c)) ** 2
            x = np.linspace(lo + 0.05, hi - 0.05, 101)
            curve = density_eval(x, self.delta, c)
            self.assertEqual(curve.failed, ())
            np.testing.assert_allclose(curve.density, mp_density(x, c), atol=1e-4)

    def test_vanishes_outside_support(self):
        """Test that the density is negligible away from the support"""
        x = np.array([0.05, 3.0, 10.0, 100.0])
        curve = density_eval(x, self.delta, 0.25)
        self.assertTrue(np.all(curve.density < 1e-4))
        self.assertTrue(np.all(curve.density >= 0))

    def test_mass_and_moments(self):
        """Test that the density integrates to 1 and reproduces the ESD moments"""
        c = 0.25
        x = np.linspace(0.25, 2.25, 8001)
        f = density_eval(x, self.delta, c).density
        self.assertAlmostEqual(trapezoid(f, x), 1.0, delta=2e-3)
        beta = gamma_to_beta(MomentVector(GAMMA, np.ones(3)), c)
        for j in (1, 2, 3):
            self.assertAlmostEqual(trapezoid(x ** j * f, x), beta.moment(j), delta=5e-3 * beta.moment(j))

    def test_mass_above_one_ratio(self):
        """Test that the continuous part carries 1/c when c > 1"""
        support = support_find(self.model1, 2.0)
        x = np.linspace(support.lower, support.upper, 8001)
        f = density_eval(x, self.model1, 2.0).density
        self.assertAlmostEqual(trapezoid(f, x), 0.5, delta=5e-3)

    def test_invalid_eps(self):
        """Test that eps must be positive"""
        with self.assertRaises(ContractViolation):
            density_eval([1.0], self.delta, 1.0, eps=0.0)

    def test_empty_grid(self):
        """Test that an empty grid gives an empty curve"""
        self.assertEqual(density_eval([], self.delta, 1.0).rows(), [])


class TestSupport(unittest.TestCase):
    """Test support resolution"""

    def test_spherical_supports(self):
        """Test the Marchenko-Pastur edges"""
        delta = DiscretePSD.delta_one()
        support = support_find(delta, 0.25)
        self.assertEqual(len(support.intervals), 1)
        np.testing.assert_allclose(support.intervals[0], (0.25, 2.25), atol=1e-8)
        self.assertFalse(support.has_zero_atom)

        support = support_find(delta, 1.0)
        self.assertAlmostEqual(support.lower, 0.0, places=8)
        self.assertAlmostEqual(support.upper, 4.0, places=8)

        support = support_find(delta, 2.0)
        np.testing.assert_allclose(support.intervals[0],
                                   ((1 - np.sqrt(2)) ** 2, (1 + np.sqrt(2)) ** 2), atol=1e-8)
        self.assertAlmostEqual(support.zero_atom_mass, 0.5)

    def test_edges_at_root_precision(self):
        """Test that edge search runs at the tightest tolerance the root finder takes"""
        self.assertGreaterEqual(BRENTQ_RTOL, 4 * np.finfo(float).eps)
        for c in (0.1, 0.5, 0.8):
            support = support_find(DiscretePSD.delta_one(), c)
            np.testing.assert_allclose(support.intervals[0],
                                       ((1 - np.sqrt(c)) ** 2, (1 + np.sqrt(c)) ** 2),
                                       rtol=0, atol=1e-10)

    def test_separated_atoms_split_support(self):
        """Test that far apart atoms at small c give two intervals"""
        psd = DiscretePSD.normalized([0.2, 5.0], [0.5, 0.5])
        support = support_find(psd, 0.01)
        self.assertEqual(len(support.intervals), 2)
        for atom in psd.atoms:
            self.assertTrue(support.contains(atom))

    def test_sample_eigenvalues_inside(self):
        """Test that nonzero SSCM eigenvalues fall in the limiting support"""
        psd = DiscretePSD([0.5, 1.5], [0.5, 0.5])
        n, p = 200, 400
        shape = ShapeSpectrum.from_psd(psd, p)
        data = sample_elliptical(n, shape, RadiusLaw('chi'), replication_rng(17, 0))
        eigenvalues = sscm_from(data).eigenvalues()[p - n:]
        support = support_find(psd, p / n)
        outside = np.mean(~support.contains(eigenvalues, margin=0.05))
        self.assertLessEqual(outside, 0.02)

    def test_zero_ratio_refused(self):
        """Test that c = 0 has no support scan"""
        with self.assertRaises(ContractViolation):
            support_find(DiscretePSD.delta_one(), 0.0)

    def test_interval_invariants(self):
        """Test that overlapping or empty intervals are rejected"""
        with self.assertRaises(ContractViolation):
            SupportIntervals(((0.0, 2.0), (1.0, 3.0)))
        with self.assertRaises(ContractViolation):
            SupportIntervals(((1.0, 1.0),))
        support = SupportIntervals(((0.0, 1.0), (2.0, 3.0)))
        np.testing.assert_array_equal(support.contains([0.5, 1.5, 2.5]), [True, False, True])


if __name__ == '__main__':
    unittest.main()
