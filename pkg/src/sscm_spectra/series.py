"""
Truncated power series at z = 0 and the CLT mean/covariance of SSCM moments

A TruncatedSeries holds Taylor coefficients f_0..f_K of a function around
z = 0. Derivatives at the origin are read off as f^(l)(0) = l! * f_l, which
is how the bias vector v and the covariance matrix Psi of the moments
p * (beta_hat_j - beta_j) are evaluated without symbolic algebra.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import linalg
from scipy.special import binom

from .exceptions import ContractViolation, InputValidationError, SingularSeriesError
from .moments import gamma_to_beta
from .psd import DiscretePSD, theta_to_moments

logger = logging.getLogger(__name__)

SERIES_OPS = ('add', 'sub', 'mul', 'div', 'pow')

Number = Union[int, float]


class TruncatedSeries:
    """
    Power series truncated at order K

    Arithmetic between series of different orders yields the lower order.
    Coefficient m of any result depends only on coefficients 0..m of the operands.

    Args:
        coefficients: f_0, f_1, ... (padded with zeros or truncated to order+1)
        order: Truncation order K (defaults to len(coefficients) - 1)
    """

    def __init__(self, coefficients=None, order: Optional[int] = None):
        if isinstance(coefficients, TruncatedSeries):
            coefficients = coefficients.coefficients
        values = np.zeros(1) if coefficients is None else np.asarray(coefficients, dtype=float).ravel()
        if order is None:
            if values.size == 0:
                raise InputValidationError("empty coefficient array")
            order = values.size - 1
        if order < 0:
            raise InputValidationError(f"order cannot be negative, got {order}")
        padded = np.zeros(order + 1)
        padded[:min(values.size, order + 1)] = values[:order + 1]
        padded.setflags(write=False)
        self._c = padded

    @classmethod
    def constant(cls, value: float, order: int) -> "TruncatedSeries":
        return cls([value], order=order)

    @classmethod
    def variable(cls, order: int) -> "TruncatedSeries":
        """The series of z itself"""
        return cls([0.0, 1.0], order=order)

    @property
    def coefficients(self) -> np.ndarray:
        return self._c

    @property
    def order(self) -> int:
        return self._c.size - 1

    def __getitem__(self, m: int) -> float:
        return float(self._c[m])

    def __len__(self) -> int:
        return self._c.size

    def derivative_at_zero(self, ell: int) -> float:
        """ell-th derivative at z = 0"""
        return float(self._c[ell]) * math.factorial(ell)

    def __call__(self, z):
        """Evaluate the truncated polynomial (Horner)"""
        total = 0.0
        for coeff in self._c[::-1]:
            total = total * z + coeff
        return total

    def _coerce(self, other) -> "TruncatedSeries":
        if isinstance(other, TruncatedSeries):
            return other
        return TruncatedSeries.constant(float(other), self.order)

    def __add__(self, other):
        other = self._coerce(other)
        order = min(self.order, other.order)
        return TruncatedSeries(self._c[:order + 1] + other._c[:order + 1])

    __radd__ = __add__

    def __neg__(self):
        return TruncatedSeries(-self._c)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, TruncatedSeries):
            return TruncatedSeries(float(other) * self._c)
        order = min(self.order, other.order)
        return TruncatedSeries(np.convolve(self._c[:order + 1], other._c[:order + 1])[:order + 1])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, TruncatedSeries):
            return TruncatedSeries(self._c / float(other))
        if abs(other._c[0]) <= 1e-14:
            raise SingularSeriesError(f"division by a series with constant term {other._c[0]!r}")
        order = min(self.order, other.order)
        quotient = np.zeros(order + 1)
        for m in range(order + 1):
            total = self._c[m] - np.dot(quotient[:m], other._c[m:0:-1])
            quotient[m] = total / other._c[0]
        return TruncatedSeries(quotient)

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __pow__(self, exponent: int):
        if not isinstance(exponent, (int, np.integer)):
            raise InputValidationError(f"only integer powers are supported, got {exponent!r}")
        if exponent < 0:
            return TruncatedSeries.constant(1.0, self.order) / (self ** -exponent)
        result = TruncatedSeries.constant(1.0, self.order)
        base = self
        while exponent:
            if exponent & 1:
                result = result * base
            base = base * base
            exponent >>= 1
        return result

    def __repr__(self):
        return f"TruncatedSeries({self._c.tolist()})"


def series_arith(a: TruncatedSeries, b: Union[TruncatedSeries, Number], op: str) -> TruncatedSeries:
    """
    Apply add, sub, mul, div or pow (b an integer exponent) to truncated series

    Args:
        a: Left operand
        b: Right operand, or the exponent for 'pow'
        op: One of SERIES_OPS

    Returns:
        Resulting series
    """
    if op == 'add':
        return a + b
    if op == 'sub':
        return a - b
    if op == 'mul':
        return a * b
    if op == 'div':
        return a / b
    if op in ('pow', 'pow-n'):
        return a ** int(b)
    raise ContractViolation(f"unknown series operation '{op}', expected one of {SERIES_OPS}")


def p_st_series(psd: DiscretePSD, s: int, t: int, order: int) -> TruncatedSeries:
    """
    Series of P_{s,t}(z) = integral of x^s (1 + x z)^(-t) dH(x)

    Coefficient m is sum_i w_i a_i^(s+m) (-1)^m binom(t+m-1, m).

    Args:
        psd: Discrete population spectral distribution
        s: Power of x (>= 0)
        t: Power of (1 + x z) in the denominator (>= 1)
        order: Truncation order K

    Returns:
        TruncatedSeries of order K
    """
    if s < 0 or t < 1:
        raise ContractViolation(f"P_(s,t) needs s >= 0 and t >= 1, got s={s}, t={t}")
    m = np.arange(order + 1)
    atoms = np.asarray(psd.atoms)
    weights = np.asarray(psd.weights)
    moments = np.power.outer(atoms, s + m).T @ weights
    return TruncatedSeries((-1.0) ** m * binom(t + m - 1, m) * moments)


def _default_order(k: int) -> int:
    return 2 * k + 4


def _p_series(psd: DiscretePSD, c: float, order: int) -> TruncatedSeries:
    # P(z) = c z P_{1,1}(z) - 1
    z = TruncatedSeries.variable(order)
    return c * z * p_st_series(psd, 1, 1, order) - 1.0


def mean_correction(psd: DiscretePSD, c: float, k: int, order: Optional[int] = None) -> np.ndarray:
    """
    Limiting mean v_2..v_k of p * (beta_hat_j - beta_j)

    v_j is the coefficient of z^(j-2) in
    c P^j [P_{2,3} / (1 - c z^2 P_{2,2}) + 2 gamma_2 P_{1,1} P_{1,2}
           - 2 P_{2,1} P_{1,2} - 2 P_{1,1} P_{2,2}].

    Args:
        psd: Population spectral distribution
        c: Dimension to sample size ratio
        k: Highest order (>= 2)
        order: Truncation order (defaults to 2k + 4)

    Returns:
        Array (v_2, ..., v_k)
    """
    if k < 2:
        raise ContractViolation(f"mean correction needs k >= 2, got {k}")
    order = _default_order(k) if order is None else order
    if order < k - 2:
        raise ContractViolation(f"truncation order {order} too small for k = {k}")
    c = float(c)
    z = TruncatedSeries.variable(order)
    p11 = p_st_series(psd, 1, 1, order)
    p12 = p_st_series(psd, 1, 2, order)
    p21 = p_st_series(psd, 2, 1, order)
    p22 = p_st_series(psd, 2, 2, order)
    p23 = p_st_series(psd, 2, 3, order)
    gamma2 = psd.moment(2)

    bracket = (p23 / (1.0 - c * z * z * p22)
               + 2.0 * gamma2 * p11 * p12
               - 2.0 * p21 * p12
               - 2.0 * p11 * p22)
    big_p = c * z * p11 - 1.0
    v = np.zeros(k - 1)
    power = big_p * big_p
    for j in range(2, k + 1):
        v[j - 2] = c * (power * bracket)[j - 2]
        power = power * big_p
    return v


def u_table(psd: DiscretePSD, c: float, k: int, order: Optional[int] = None) -> np.ndarray:
    """
    u[s, t] = coefficient of z^t in P(z)^s for s = 0..k and t = 0..order
    """
    order = _default_order(k) if order is None else order
    big_p = _p_series(psd, c, order)
    table = np.zeros((k + 1, order + 1))
    power = TruncatedSeries.constant(1.0, order)
    for s in range(k + 1):
        table[s] = power.coefficients
        power = power * big_p
    return table


def covariance_matrix(psd: DiscretePSD, c: float, k: int, order: Optional[int] = None) -> np.ndarray:
    """
    Limiting covariance Psi of p * (beta_hat_2..beta_hat_k)

    psi_ij = 2 sum_{l=0}^{i-1} (i - l) u_{i,l} u_{j,i+j-l} + 2 c gamma_2 i j beta_i beta_j
             + 2 j beta_j u_{i,i+1} + 2 i beta_i u_{j,j+1}

    Args:
        psd: Population spectral distribution
        c: Dimension to sample size ratio
        k: Highest order (>= 2)
        order: Truncation order (defaults to 2k + 4, at least 2k + 1)

    Returns:
        (k - 1) x (k - 1) symmetric matrix
    """
    if k < 2:
        raise ContractViolation(f"covariance needs k >= 2, got {k}")
    order = _default_order(k) if order is None else order
    if order < 2 * k + 1:
        raise ContractViolation(f"truncation order {order} too small for k = {k}")
    c = float(c)
    u = u_table(psd, c, k, order)
    gamma2 = psd.moment(2)
    beta = gamma_to_beta(theta_to_moments(psd, k), c, k).values

    psi = np.zeros((k - 1, k - 1))
    for i in range(2, k + 1):
        for j in range(2, k + 1):
            total = 0.0
            for ell in range(i):
                total += (i - ell) * u[i, ell] * u[j, i + j - ell]
            psi[i - 2, j - 2] = (2.0 * total
                                 + 2.0 * c * gamma2 * i * j * beta[i - 1] * beta[j - 1]
                                 + 2.0 * j * beta[j - 1] * u[i, i + 1]
                                 + 2.0 * i * beta[i - 1] * u[j, j + 1])

    asymmetry = np.max(np.abs(psi - psi.T))
    if asymmetry > 1e-9 * max(1.0, np.max(np.abs(psi))):
        logger.warning(f"Psi asymmetric by {asymmetry:.3g} (c={c}, k={k})")
    return 0.5 * (psi + psi.T)


@dataclass(frozen=True)
class CltCorrection:
    """Mean vector v and covariance Psi of the moment CLT at (psd, c)"""

    mean: np.ndarray
    covariance: np.ndarray
    k: int
    ratio_c: float
    psd: DiscretePSD


def clt_correction(psd: DiscretePSD, c: float, k: int) -> CltCorrection:
    """Bundle mean_correction and covariance_matrix, checking Psi is PSD"""
    psi = covariance_matrix(psd, c, k)
    smallest = float(np.min(linalg.eigvalsh(psi)))
    if smallest < -1e-8 * max(1.0, float(np.max(np.abs(psi)))):
        logger.warning(f"Psi not positive semidefinite: smallest eigenvalue {smallest:.3g}")
    return CltCorrection(mean_correction(psd, c, k), psi, k, float(c), psd)
