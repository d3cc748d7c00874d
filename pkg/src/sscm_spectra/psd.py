"""
Discrete population spectral distributions and the moment map between them and their moments
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import linalg

from .exceptions import (
    ArityError,
    ContractViolation,
    DegeneratePsdError,
    InfeasiblePsdError,
    InputValidationError,
    InvalidMomentSequenceError,
)
from .moments import GAMMA, MomentVector

logger = logging.getLogger(__name__)

CONSTRAINT_TOL = 1e-10
WEIGHT_FLOOR = 1e-10
NEGATIVE_WEIGHT_TOL = 1e-8


@dataclass(frozen=True)
class DiscretePSD:
    """
    H = sum_i w_i delta_{a_i} with sum w_i = 1 and sum a_i w_i = 1

    Atoms are strictly increasing and positive, weights strictly positive.
    """

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float).ravel()
        weights = np.array(self.weights, dtype=float).ravel()
        if atoms.size == 0 or atoms.size != weights.size:
            raise InputValidationError(
                f"need matching non-empty atoms and weights, got {atoms.size} and {weights.size}")
        if not (np.all(np.isfinite(atoms)) and np.all(np.isfinite(weights))):
            raise InputValidationError("atoms and weights must be finite")
        if np.any(atoms <= 0):
            raise InputValidationError(f"atoms must be positive, got {atoms.tolist()}")
        if np.any(np.diff(atoms) <= 0):
            raise InputValidationError(f"atoms must be strictly increasing, got {atoms.tolist()}")
        if np.any(weights <= 0):
            raise InputValidationError(f"weights must be positive, got {weights.tolist()}")
        if abs(weights.sum() - 1.0) > CONSTRAINT_TOL:
            raise InputValidationError(f"weights sum to {weights.sum()!r}, expected 1")
        if abs(atoms @ weights - 1.0) > CONSTRAINT_TOL:
            raise InputValidationError(f"mean atom is {atoms @ weights!r}, expected 1")
        atoms.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, 'atoms', atoms)
        object.__setattr__(self, 'weights', weights)

    @property
    def order(self) -> int:
        """Number of atoms d"""
        return self.atoms.size

    @property
    def theta(self) -> np.ndarray:
        """Free parameters (a_1, w_1, ..., a_{d-1}, w_{d-1})"""
        return np.column_stack([self.atoms[:-1], self.weights[:-1]]).ravel()

    @property
    def full_theta(self) -> np.ndarray:
        """All parameters (a_1, w_1, ..., a_d, w_d)"""
        return np.column_stack([self.atoms, self.weights]).ravel()

    def moment(self, j: int) -> float:
        """gamma_j = sum_i w_i a_i^j"""
        return float(np.power(self.atoms, j) @ self.weights)

    def parameter_names(self, full: bool = False):
        """Names matching theta (or full_theta)"""
        count = self.order if full else self.order - 1
        names = []
        for i in range(1, count + 1):
            names.extend([f"a{i}", f"w{i}"])
        return names

    def describe(self) -> str:
        """Format as 'atom:weight,...' (inverse of parse)"""
        return ','.join(f"{a:.17g}:{w:.17g}" for a, w in zip(self.atoms, self.weights))

    def __str__(self):
        terms = ' + '.join(f"{w:.4g}*delta({a:.4g})" for a, w in zip(self.atoms, self.weights))
        return f"H = {terms}"

    @classmethod
    def delta_one(cls) -> "DiscretePSD":
        """Point mass at 1 (spherical population)"""
        return cls(np.ones(1), np.ones(1))

    @classmethod
    def from_theta(cls, theta: Sequence[float]) -> "DiscretePSD":
        """
        Rebuild a PSD from its free parameters

        Args:
            theta: (a_1, w_1, ..., a_{d-1}, w_{d-1}); empty gives delta_1

        Returns:
            DiscretePSD with w_d = 1 - sum w_i and a_d = (1 - sum a_i w_i) / w_d
        """
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.size % 2:
            raise InputValidationError(f"theta must have even length, got {theta.size}")
        if theta.size == 0:
            return cls.delta_one()
        atoms, weights = theta[0::2], theta[1::2]
        w_last = 1.0 - weights.sum()
        if w_last <= 0:
            raise InputValidationError(f"free weights sum to {weights.sum()!r} >= 1")
        a_last = (1.0 - atoms @ weights) / w_last
        return cls(np.append(atoms, a_last), np.append(weights, w_last))

    @classmethod
    def from_mixture(cls, atoms: Sequence[float], weights: Sequence[float],
                     merge_tol: float = 1e-12) -> "DiscretePSD":
        """
        Build a PSD from unsorted, possibly repeated atoms

        Atoms closer than merge_tol are merged, weights renormalized to sum 1
        and atoms rescaled so that the mean atom is 1.

        Args:
            atoms: Atom locations
            weights: Nonnegative weights (zero-weight atoms are dropped)
            merge_tol: Distance below which atoms coincide

        Returns:
            DiscretePSD
        """
        atoms = np.asarray(atoms, dtype=float).ravel()
        weights = np.asarray(weights, dtype=float).ravel()
        if atoms.size != weights.size or atoms.size == 0:
            raise InputValidationError("need matching non-empty atoms and weights")
        if np.any(weights < 0):
            raise InputValidationError(f"weights must be nonnegative, got {weights.tolist()}")
        keep = weights > 0
        atoms, weights = atoms[keep], weights[keep]
        order = np.argsort(atoms, kind='stable')
        atoms, weights = atoms[order], weights[order]

        merged_atoms, merged_weights = [atoms[0]], [weights[0]]
        for a, w in zip(atoms[1:], weights[1:]):
            if a - merged_atoms[-1] <= merge_tol * max(1.0, abs(a)):
                merged_weights[-1] += w
            else:
                merged_atoms.append(a)
                merged_weights.append(w)
        return cls.normalized(merged_atoms, merged_weights)

    @classmethod
    def normalized(cls, atoms: Sequence[float], weights: Sequence[float]) -> "DiscretePSD":
        """Renormalize weights and rescale atoms so both constraints hold"""
        atoms = np.asarray(atoms, dtype=float)
        weights = np.asarray(weights, dtype=float)
        total = weights.sum()
        if not total > 0:
            raise InputValidationError("weights must have positive total mass")
        weights = weights / total
        scale = atoms @ weights
        if not scale > 0:
            raise InputValidationError("atoms must have positive mean")
        if abs(scale - 1.0) > 1e-6 or abs(total - 1.0) > 1e-6:
            logger.warning(f"Rescaled spectral distribution (mass {total:.6g}, mean atom {scale:.6g})")
        return cls(atoms / scale, weights)

    @classmethod
    def parse(cls, text: str) -> "DiscretePSD":
        """
        Parse 'a1:w1,a2:w2,...' (atom:weight pairs)

        Args:
            text: Comma separated atom:weight pairs, e.g. '0.5:0.5,1.5:0.5'

        Returns:
            DiscretePSD (merged and normalized)
        """
        atoms, weights = [], []
        try:
            for item in str(text).split(','):
                if not item.strip():
                    continue
                atom, weight = item.split(':')
                atoms.append(float(atom))
                weights.append(float(weight))
        except ValueError as exc:
            raise InputValidationError(f"cannot parse spectral distribution '{text}': {exc}") from exc
        return cls.from_mixture(atoms, weights)


def theta_to_moments(psd: DiscretePSD, k: int) -> MomentVector:
    """
    Population moments gamma_1..gamma_k of a discrete PSD

    Args:
        psd: Discrete population spectral distribution
        k: Highest order (>= 1)

    Returns:
        MomentVector of gamma flavor with gamma_1 = 1 exactly
    """
    if k < 1:
        raise ContractViolation(f"moment order must be at least 1, got {k}")
    values = np.power.outer(psd.atoms, np.arange(1, k + 1)).T @ psd.weights
    values[0] = 1.0
    return MomentVector(GAMMA, values)


def g1_solve(g: MomentVector, d: int, diagnostics: Optional[Dict[str, Any]] = None) -> DiscretePSD:
    """
    Recover the d-atom PSD whose moments are gamma_1..gamma_{2d-1}

    The atoms are the roots of the monic polynomial x^d + q_{d-1} x^{d-1} + ... + q_0
    whose coefficients solve the Hankel system sum_j mu_{i+j} q_j = -mu_{i+d}
    (mu_0 = 1). Weights then solve the Vandermonde system on mu_0..mu_{d-1}.

    Args:
        g: Moments of gamma flavor through order 2d - 1 at least
        d: Number of atoms
        diagnostics: Optional dict filled with projection details

    Returns:
        DiscretePSD of order d

    Raises:
        InvalidMomentSequenceError: singular Hankel system, complex or repeated roots
        InfeasiblePsdError: non-positive atom or weight below -1e-8
    """
    if g.flavor != GAMMA:
        raise ContractViolation(f"g1_solve expects gamma moments, got '{g.flavor}'")
    if d < 1:
        raise ContractViolation(f"order must be at least 1, got {d}")
    if g.k < 2 * d - 1:
        raise ArityError(f"order {d} needs moments through {2 * d - 1}, got {g.k}")
    if diagnostics is None:
        diagnostics = {}
    diagnostics['projected'] = False
    if d == 1:
        return DiscretePSD.delta_one()

    mu = np.concatenate([[1.0], g.values[:2 * d - 1]])
    hankel = linalg.hankel(mu[:d], mu[d - 1:2 * d - 1])
    try:
        coeffs = linalg.solve(hankel, -mu[d:2 * d], assume_a='sym')
    except linalg.LinAlgError as exc:
        raise InvalidMomentSequenceError(f"moment matrix of order {d} is singular") from exc
    if not np.all(np.isfinite(coeffs)):
        raise InvalidMomentSequenceError(f"moment matrix of order {d} is singular")

    companion = P.polycompanion(np.append(coeffs, 1.0))
    roots = linalg.eigvals(companion)
    scale = max(1.0, float(np.max(np.abs(roots))))
    if np.any(np.abs(roots.imag) > 1e-8 * scale):
        raise InvalidMomentSequenceError(f"complex atoms {np.round(roots, 6).tolist()} for order {d}")
    atoms = np.sort(roots.real)
    if np.min(np.diff(atoms)) <= 1e-10 * scale:
        raise InvalidMomentSequenceError(f"repeated atoms {atoms.tolist()} for order {d}")
    if atoms[0] <= 0:
        raise InfeasiblePsdError(f"non-positive atom {atoms[0]!r} for order {d}")

    vandermonde = np.vander(atoms, d, increasing=True).T
    weights = linalg.solve(vandermonde, mu[:d])
    if np.min(weights) < -NEGATIVE_WEIGHT_TOL:
        raise InfeasiblePsdError(f"negative weight {np.min(weights)!r} for order {d}")

    clamped = weights < WEIGHT_FLOOR
    weight_sum = float(weights.sum())
    weights = np.maximum(weights, WEIGHT_FLOOR)
    weights = weights / weights.sum()
    first_moment = float(atoms @ weights)
    atoms = atoms / first_moment

    projected = bool(np.any(clamped)) or abs(weight_sum - 1.0) > 1e-8 or abs(first_moment - 1.0) > 1e-8
    diagnostics.update({
        'projected': projected,
        'clamped_weights': int(np.count_nonzero(clamped)),
        'weight_sum': weight_sum,
        'first_moment': first_moment,
    })
    if projected:
        logger.warning(f"Projected order-{d} solution onto the parameter space "
                       f"(clamped {int(np.count_nonzero(clamped))}, mass {weight_sum:.6g}, mean {first_moment:.6g})")
    return DiscretePSD(atoms, weights)


def moment_jacobian(psd: DiscretePSD) -> np.ndarray:
    """
    d(gamma_2..gamma_{2d-1}) / d theta with (a_d, w_d) eliminated

    Args:
        psd: PSD of order d >= 2

    Returns:
        (2d - 2) x (2d - 2) matrix, columns ordered as theta
    """
    d = psd.order
    if d < 2:
        raise ContractViolation("the moment Jacobian needs at least two atoms")
    a, w = psd.atoms, psd.weights
    a_d = a[-1]
    jac = np.zeros((2 * d - 2, 2 * d - 2))
    for row, j in enumerate(range(2, 2 * d)):
        for i in range(d - 1):
            jac[row, 2 * i] = j * w[i] * (a[i] ** (j - 1) - a_d ** (j - 1))
            jac[row, 2 * i + 1] = a[i] ** j - a_d ** j + j * a_d ** (j - 1) * (a_d - a[i])
    return jac


def jacobian_g1(psd: DiscretePSD) -> np.ndarray:
    """
    Jacobian of gamma_2..gamma_{2d-1} -> theta at psd

    Args:
        psd: PSD of order d >= 2

    Returns:
        (2d - 2) x (2d - 2) matrix

    Raises:
        DegeneratePsdError: the forward Jacobian is singular (coalescing atoms)
    """
    forward = moment_jacobian(psd)
    singular_values = linalg.svdvals(forward)
    smallest = float(singular_values[-1])
    condition = float(singular_values[0]) / smallest if smallest > 0 else np.inf
    # moments and parameters are O(1), so a tiny singular value means coalescing atoms
    if not np.isfinite(condition) or condition > 1e13 or smallest < 1e-12:
        raise DegeneratePsdError(f"moment Jacobian is singular at {psd} (condition {condition:.3g})",
                                 diagnostics={'condition': condition, 'smallest_singular_value': smallest})
    try:
        return linalg.inv(forward)
    except linalg.LinAlgError as exc:
        raise DegeneratePsdError(f"moment Jacobian is singular at {psd}") from exc


def full_parameter_gradient(psd: DiscretePSD) -> np.ndarray:
    """
    d(a_1, w_1, ..., a_d, w_d) / d theta

    Free parameters map to themselves; the eliminated ones follow
    w_d = 1 - sum w_i and a_d = (1 - sum a_i w_i) / w_d.

    Returns:
        2d x (2d - 2) matrix
    """
    d = psd.order
    grad = np.zeros((2 * d, 2 * d - 2))
    grad[:2 * d - 2] = np.eye(2 * d - 2)
    a, w = psd.atoms, psd.weights
    for i in range(d - 1):
        grad[2 * d - 2, 2 * i] = -w[i] / w[-1]
        grad[2 * d - 2, 2 * i + 1] = (a[-1] - a[i]) / w[-1]
        grad[2 * d - 1, 2 * i + 1] = -1.0
    return grad
