"""
Unit tests for discrete population spectral distributions and the moment map
"""
import unittest
import os

import numpy as np

import sys
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from sscm_spectra.exceptions import (
    ArityError,
    ContractViolation,
    DegeneratePsdError,
    InfeasiblePsdError,
    InputValidationError,
    InvalidMomentSequenceError,
)
from sscm_spectra.moments import GAMMA, MomentVector
from sscm_spectra.psd import (
    DiscretePSD,
    full_parameter_gradient,
    g1_solve,
    jacobian_g1,
    moment_jacobian,
    theta_to_moments,
)


def signed_moments(atoms, weights, k):
    """Moments of an arbitrary signed discrete measure"""
    atoms = np.asarray(atoms, dtype=float)
    weights = np.asarray(weights, dtype=float)
    values = np.array([np.sum(weights * atoms ** j) for j in range(1, k + 1)])
    values[0] = 1.0
    return MomentVector(GAMMA, values)


class TestDiscretePSD(unittest.TestCase):
    """Test construction and invariants of DiscretePSD"""

    def setUp(self):
        """Set up test fixtures"""
        self.model1 = DiscretePSD([0.5, 1.5], [0.5, 0.5])
        self.model2 = DiscretePSD([0.2, 1.0, 1.8], [0.3, 0.4, 0.3])

    def test_invariants_enforced(self):
        """Test that invalid atoms or weights are rejected"""
        with self.assertRaises(InputValidationError):
            DiscretePSD([1.5, 0.5], [0.5, 0.5])
        with self.assertRaises(InputValidationError):
            DiscretePSD([0.5, 1.5], [0.4, 0.6])
        with self.assertRaises(InputValidationError):
            DiscretePSD([0.5, 1.5], [0.5, 0.6])
        with self.assertRaises(InputValidationError):
            DiscretePSD([-1.0, 3.0], [0.5, 0.5])
        with self.assertRaises(InputValidationError):
            DiscretePSD([1.0, 1.0], [0.5, 0.5])

    def test_theta(self):
        """Test free and full parameter vectors"""
        np.testing.assert_allclose(self.model2.theta, [0.2, 0.3, 1.0, 0.4])
        np.testing.assert_allclose(self.model2.full_theta, [0.2, 0.3, 1.0, 0.4, 1.8, 0.3])
        self.assertEqual(self.model2.parameter_names(), ['a1', 'w1', 'a2', 'w2'])
        self.assertEqual(self.model2.parameter_names(full=True), ['a1', 'w1', 'a2', 'w2', 'a3', 'w3'])

    def test_from_theta(self):
        """Test that the eliminated atom and weight are restored"""
        psd = DiscretePSD.from_theta(self.model2.theta)
        np.testing.assert_allclose(psd.atoms, self.model2.atoms, rtol=1e-12)
        np.testing.assert_allclose(psd.weights, self.model2.weights, rtol=1e-12)
        self.assertEqual(DiscretePSD.from_theta([]).order, 1)

    def test_from_mixture_merges_atoms(self):
        """Test that coinciding atoms are merged"""
        psd = DiscretePSD.from_mixture([1.5, 0.5, 0.5, 1.5], [0.25] * 4)
        np.testing.assert_allclose(psd.atoms, [0.5, 1.5])
        np.testing.assert_allclose(psd.weights, [0.5, 0.5])
        self.assertEqual(DiscretePSD.from_mixture([1.0, 1.0], [0.5, 0.5]).order, 1)

    def test_normalized_rescales(self):
        """Test that atoms are rescaled to mean 1"""
        with self.assertLogs('sscm_spectra.psd', level='WARNING'):
            psd = DiscretePSD.normalized([1.0, 3.0], [0.5, 0.5])
        np.testing.assert_allclose(psd.atoms, [0.5, 1.5])

    def test_parse_and_describe(self):
        """Test the atom:weight text form"""
        psd = DiscretePSD.parse('0.5:0.5, 1.5:0.5')
        np.testing.assert_allclose(psd.atoms, self.model1.atoms)
        again = DiscretePSD.parse(self.model2.describe())
        np.testing.assert_allclose(again.atoms, self.model2.atoms, rtol=1e-14)
        np.testing.assert_allclose(again.weights, self.model2.weights, rtol=1e-14)
        with self.assertRaises(InputValidationError):
            DiscretePSD.parse('0.5;0.5')

    def test_moments(self):
        """Test gamma_j of the two-atom model"""
        g = theta_to_moments(self.model1, 3)
        np.testing.assert_allclose(g.values, [1.0, 1.25, 1.75])
        np.testing.assert_array_equal(theta_to_moments(DiscretePSD.delta_one(), 5).values, 1.0)


class TestMomentInversion(unittest.TestCase):
    """Test recovery of a PSD from its moments"""

    def test_two_atom_model(self):
        """Test recovery of 0.5 delta_0.5 + 0.5 delta_1.5"""
        psd = g1_solve(MomentVector(GAMMA, [1.0, 1.25, 1.75]), 2)
        np.testing.assert_allclose(psd.atoms, [0.5, 1.5], rtol=1e-12)
        np.testing.assert_allclose(psd.weights, [0.5, 0.5], rtol=1e-12)

    def test_round_trip(self):
        """Test g1_solve(theta_to_moments(H)) = H"""
        cases = [
            DiscretePSD([0.2, 1.0, 1.8], [0.3, 0.4, 0.3]),
            DiscretePSD([0.25, 4.0], [0.8, 0.2]),
            DiscretePSD.normalized([0.3, 0.7, 1.2, 1.8], [0.25, 0.25, 0.25, 0.25]),
        ]
        for psd in cases:
            diagnostics = {}
            recovered = g1_solve(theta_to_moments(psd, 2 * psd.order - 1), psd.order, diagnostics)
            np.testing.assert_allclose(recovered.atoms, psd.atoms, rtol=1e-8)
            np.testing.assert_allclose(recovered.weights, psd.weights, rtol=1e-8)
            self.assertFalse(diagnostics['projected'])

    def test_order_one(self):
        """Test that d = 1 always gives delta_1"""
        psd = g1_solve(MomentVector(GAMMA, [1.0]), 1)
        np.testing.assert_array_equal(psd.atoms, [1.0])

    def test_arity(self):
        """Test that 2d - 1 moments are required"""
        with self.assertRaises(ArityError):
            g1_solve(MomentVector(GAMMA, [1.0, 1.2, 1.5, 2.0]), 3)

    def test_singular_moment_matrix(self):
        """Test moments of a one-atom law asked for two atoms"""
        with self.assertRaises(InvalidMomentSequenceError):
            g1_solve(MomentVector(GAMMA, [1.0, 1.0, 1.0]), 2)

    def test_complex_roots(self):
        """Test moments without a real two-atom representation"""
        with self.assertRaises(InvalidMomentSequenceError):
            g1_solve(MomentVector(GAMMA, [1.0, 0.5, 0.0]), 2)

    def test_negative_atom(self):
        """Test that a non-positive atom is infeasible"""
        with self.assertRaises(InfeasiblePsdError):
            g1_solve(MomentVector(GAMMA, [1.0, 0.9, 1.0]), 2)

    def test_negative_weight(self):
        """Test that a signed measure is infeasible"""
        a2 = (1.0 + 0.1 * 1.2) / 1.1
        g = signed_moments([1.2, a2], [-0.1, 1.1], 3)
        with self.assertRaises(InfeasiblePsdError):
            g1_solve(g, 2)

    def test_rejects_beta_moments(self):
        """Test the flavor contract"""
        with self.assertRaises(ContractViolation):
            g1_solve(MomentVector('beta', [1.0, 2.0, 5.0], 1.0), 2)


class TestJacobians(unittest.TestCase):
    """Test the Jacobians between moments and parameters"""

    def setUp(self):
        """Set up test fixtures"""
        self.model1 = DiscretePSD([0.5, 1.5], [0.5, 0.5])
        self.model2 = DiscretePSD([0.2, 1.0, 1.8], [0.3, 0.4, 0.3])

    def test_forward_against_finite_differences(self):
        """Test d gamma / d theta by central differences"""
        psd = self.model2
        theta = psd.theta
        h = 1e-6
        numeric = np.zeros((4, 4))
        for col in range(4):
            up, down = theta.copy(), theta.copy()
            up[col] += h
            down[col] -= h
            g_up = theta_to_moments(DiscretePSD.from_theta(up), 5).values[1:]
            g_down = theta_to_moments(DiscretePSD.from_theta(down), 5).values[1:]
            numeric[:, col] = (g_up - g_down) / (2 * h)
        np.testing.assert_allclose(moment_jacobian(psd), numeric, rtol=1e-6, atol=1e-8)

    def test_inverse_against_finite_differences(self):
        """Test jacobian_g1 against central differences of g1_solve"""
        base = theta_to_moments(self.model1, 3).values
        h = 1e-6
        numeric = np.zeros((2, 2))
        for col in range(2):
            up, down = base.copy(), base.copy()
            up[col + 1] += h
            down[col + 1] -= h
            theta_up = g1_solve(MomentVector(GAMMA, up), 2).theta
            theta_down = g1_solve(MomentVector(GAMMA, down), 2).theta
            numeric[:, col] = (theta_up - theta_down) / (2 * h)
        np.testing.assert_allclose(jacobian_g1(self.model1), numeric, rtol=1e-5, atol=1e-7)

    def test_inverse_relation(self):
        """Test that jacobian_g1 inverts the forward Jacobian"""
        np.testing.assert_allclose(jacobian_g1(self.model2) @ moment_jacobian(self.model2),
                                   np.eye(4), atol=1e-9)

    def test_coalescing_atoms(self):
        """Test that nearly equal atoms make the Jacobian degenerate"""
        psd = DiscretePSD([1.0 - 1e-7, 1.0 + 1e-7], [0.5, 0.5])
        with self.assertRaises(DegeneratePsdError):
            jacobian_g1(psd)

    def test_needs_two_atoms(self):
        """Test that delta_1 has no free parameters"""
        with self.assertRaises(ContractViolation):
            jacobian_g1(DiscretePSD.delta_one())

    def test_full_parameter_gradient(self):
        """Test d(full theta) / d theta by central differences"""
        psd = self.model2
        theta = psd.theta
        h = 1e-6
        numeric = np.zeros((6, 4))
        for col in range(4):
            up, down = theta.copy(), theta.copy()
            up[col] += h
            down[col] -= h
            numeric[:, col] = (DiscretePSD.from_theta(up).full_theta
                               - DiscretePSD.from_theta(down).full_theta) / (2 * h)
        np.testing.assert_allclose(full_parameter_gradient(psd), numeric, rtol=1e-6, atol=1e-8)


if __name__ == '__main__':
    unittest.main()
