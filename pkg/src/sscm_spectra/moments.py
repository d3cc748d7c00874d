"""
Spectral moments of the SSCM and the moment recursion between ESD and PSD moments

The limiting ESD moments beta_j and the population moments gamma_j satisfy

    beta_j = sum c^(i_1+...+i_j-1) gamma_2^i_2 ... gamma_j^i_j phi(i_1, ..., i_j)

over all (i_1, ..., i_j) with i_1 + 2 i_2 + ... + j i_j = j, where
phi = j! / [i_1! ... i_j! (j + 1 - i_1 - ... - i_j)!].
"""
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .exceptions import (
    ArityError,
    ContractViolation,
    InputValidationError,
    NumericalError,
    UnsupportedOrderError,
)
from .sampling import Sscm

logger = logging.getLogger(__name__)

BETA = 'beta'
GAMMA = 'gamma'

MAX_ORDER = 20


@dataclass(frozen=True)
class MomentVector:
    """
    Moments of orders 1..k

    values[j - 1] holds the moment of order j; the first one is exactly 1.
    """

    flavor: str
    values: np.ndarray
    ratio_c: Optional[float] = None

    def __post_init__(self):
        if self.flavor not in (BETA, GAMMA):
            raise InputValidationError(f"unknown moment flavor '{self.flavor}'")
        values = np.array(self.values, dtype=float).ravel()
        if values.size < 1:
            raise ArityError("a moment vector needs at least the first moment")
        if values[0] != 1.0:
            raise InputValidationError(f"first moment must be exactly 1, got {values[0]!r}")
        if self.flavor == BETA and (self.ratio_c is None or self.ratio_c < 0):
            raise InputValidationError("beta moments need a nonnegative ratio c")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @property
    def k(self) -> int:
        """Highest order held"""
        return self.values.size

    def moment(self, j: int) -> float:
        """Moment of order j (order 0 is 1 by convention)"""
        if j == 0:
            return 1.0
        if not 1 <= j <= self.k:
            raise ArityError(f"order {j} not available (k = {self.k})")
        return float(self.values[j - 1])

    def truncated(self, k: int) -> "MomentVector":
        """Keep orders 1..k"""
        if k > self.k:
            raise ArityError(f"cannot truncate to order {k} (k = {self.k})")
        return MomentVector(self.flavor, self.values[:k], self.ratio_c)

    def tail(self) -> np.ndarray:
        """Orders 2..k as an array"""
        return np.array(self.values[1:])


@dataclass(frozen=True)
class PartitionTerm:
    """One solution of i_1 + 2 i_2 + ... + j i_j = j with its exact weight"""

    multiplicities: Tuple[int, ...]
    weight: Fraction

    @property
    def order(self) -> int:
        return len(self.multiplicities)

    @property
    def parts(self) -> int:
        """i_1 + ... + i_j"""
        return sum(self.multiplicities)


def _phi(multiplicities: Sequence[int]) -> Fraction:
    j = len(multiplicities)
    denominator = math.factorial(j + 1 - sum(multiplicities))
    for count in multiplicities:
        denominator *= math.factorial(count)
    return Fraction(math.factorial(j), denominator)


def _solutions(remaining: int, part: int) -> List[Tuple[int, ...]]:
    # multiplicities of parts 1..part summing (with weights) to remaining,
    # returned in descending lexicographic order of (i_1, ..., i_part)
    if part == 1:
        return [(remaining,)]
    found = []
    for count in range(remaining // part + 1):
        for head in _solutions(remaining - count * part, part - 1):
            found.append(head + (count,))
    found.sort(reverse=True)
    return found


@lru_cache(maxsize=None)
def _partition_table(j: int) -> Tuple[PartitionTerm, ...]:
    return tuple(PartitionTerm(m, _phi(m)) for m in _solutions(j, j))


def enumerate_partitions(j: int) -> List[PartitionTerm]:
    """
    All partitions of j in multiplicity form with their phi weights

    Args:
        j: Order (1..20)

    Returns:
        Partition terms in descending lexicographic order
    """
    if not isinstance(j, (int, np.integer)) or not 1 <= j <= MAX_ORDER:
        raise UnsupportedOrderError(f"partition order must be in 1..{MAX_ORDER}, got {j}")
    return list(_partition_table(int(j)))


@lru_cache(maxsize=None)
def _term_arrays(j: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    # (multiplicities of parts 2..j, c exponents, float weights)
    terms = _partition_table(j)
    powers = np.array([t.multiplicities[1:] for t in terms], dtype=float).reshape(len(terms), j - 1)
    exponents = np.array([t.parts - 1 for t in terms], dtype=float)
    weights = np.array([float(t.weight) for t in terms])
    for array in (powers, exponents, weights):
        array.setflags(write=False)
    return powers, exponents, weights


def _beta_j(gammas: np.ndarray, c: float, j: int) -> float:
    # gammas holds gamma_2..gamma_j
    powers, exponents, weights = _term_arrays(j)
    monomials = np.prod(np.power(gammas[None, :j - 1], powers), axis=1)
    return float(np.sum(weights * np.power(c, exponents) * monomials))


def _beta_gradient(gammas: np.ndarray, c: float, j: int) -> np.ndarray:
    # d beta_j / d gamma_m for m = 2..j
    powers, exponents, weights = _term_arrays(j)
    coeff = weights * np.power(c, exponents)
    grad = np.zeros(j - 1)
    g = gammas[:j - 1]
    for m in range(j - 1):
        active = powers[:, m] > 0
        if not np.any(active):
            continue
        reduced = powers[active].copy()
        reduced[:, m] -= 1
        monomials = np.prod(np.power(g[None, :], reduced), axis=1)
        grad[m] = np.sum(coeff[active] * powers[active, m] * monomials)
    return grad


def _check_ratio(c: float) -> float:
    c = float(c)
    if not c >= 0:
        raise InputValidationError(f"ratio c must be nonnegative, got {c}")
    return c


def esd_moments(b: Sscm, k: int) -> MomentVector:
    """
    Empirical spectral moments tr(B^j) / p for j = 1..k

    Args:
        b: Spatial-sign covariance matrix
        k: Highest order

    Returns:
        MomentVector of beta flavor with ratio p / n
    """
    if k < 1:
        raise ContractViolation(f"moment order must be at least 1, got {k}")
    try:
        eigenvalues = b.eigenvalues()
    except (linalg.LinAlgError, ValueError) as exc:
        diagnostics = {
            'p': b.p,
            'n': b.n,
            'finite': bool(np.all(np.isfinite(b.matrix))),
            'asymmetry': float(np.max(np.abs(b.matrix - b.matrix.T))) if b.p else 0.0,
        }
        raise NumericalError(f"eigendecomposition of B_n failed: {exc}", diagnostics=diagnostics) from exc

    orders = np.arange(1, k + 1)
    values = np.mean(np.power.outer(eigenvalues, orders), axis=0)
    if abs(values[0] - 1.0) > 1e-9:
        raise NumericalError(
            f"first ESD moment {values[0]!r} differs from 1",
            diagnostics={'trace_over_p': float(values[0]),
                         'condition': float(np.max(np.abs(eigenvalues)) / max(np.min(np.abs(eigenvalues)), 1e-300))},
        )
    values[0] = 1.0
    return MomentVector(BETA, values, ratio_c=b.ratio)


def gamma_to_beta(g: MomentVector, c: float, k: Optional[int] = None) -> MomentVector:
    """
    Map population moments to limiting ESD moments

    Args:
        g: Population moments of gamma flavor
        c: Dimension to sample size ratio
        k: Highest order (defaults to g.k)

    Returns:
        MomentVector of beta flavor
    """
    c = _check_ratio(c)
    k = g.k if k is None else k
    if k > g.k:
        raise ArityError(f"need gamma moments through order {k}, got {g.k}")
    if k > MAX_ORDER:
        raise UnsupportedOrderError(f"order {k} exceeds {MAX_ORDER}")
    gammas = g.tail()
    values = np.ones(k)
    for j in range(2, k + 1):
        values[j - 1] = _beta_j(gammas, c, j)
    return MomentVector(BETA, values, ratio_c=c)


def beta_to_gamma(b: MomentVector, c: Optional[float] = None) -> MomentVector:
    """
    Invert the moment recursion order by order

    The term with i_j = 1 contributes gamma_j with coefficient 1, so
    gamma_j = beta_j minus a polynomial in gamma_2..gamma_{j-1}.

    Args:
        b: ESD moments of beta flavor
        c: Ratio (defaults to b.ratio_c)

    Returns:
        MomentVector of gamma flavor
    """
    c = _check_ratio(b.ratio_c if c is None else c)
    if b.k > MAX_ORDER:
        raise UnsupportedOrderError(f"order {b.k} exceeds {MAX_ORDER}")
    betas = b.values
    gammas = np.zeros(max(b.k - 1, 0))
    for j in range(2, b.k + 1):
        gammas[j - 2] = 0.0
        lower = _beta_j(gammas, c, j)
        gammas[j - 2] = betas[j - 1] - lower
    return MomentVector(GAMMA, np.concatenate([[1.0], gammas]))


def beta_gamma_jacobian(g: MomentVector, c: float, k: Optional[int] = None) -> np.ndarray:
    """
    Analytic d(beta_2..beta_k) / d(gamma_2..gamma_k)

    Lower triangular with unit diagonal.
    """
    c = _check_ratio(c)
    k = g.k if k is None else k
    gammas = g.tail()
    jac = np.zeros((k - 1, k - 1))
    for j in range(2, k + 1):
        jac[j - 2, :j - 1] = _beta_gradient(gammas, c, j)
    return jac


def jacobian_g2(b: MomentVector, c: Optional[float] = None) -> np.ndarray:
    """
    Jacobian of beta_2..beta_k -> gamma_2..gamma_k

    Args:
        b: ESD moments of beta flavor (k >= 2)
        c: Ratio (defaults to b.ratio_c)

    Returns:
        (k - 1) x (k - 1) lower-triangular matrix
    """
    c = _check_ratio(b.ratio_c if c is None else c)
    if b.k < 2:
        raise ArityError("the Jacobian needs moments through order 2 at least")
    forward = beta_gamma_jacobian(beta_to_gamma(b, c), c, b.k)
    return linalg.solve_triangular(forward, np.eye(b.k - 1), lower=True, unit_diagonal=True)
