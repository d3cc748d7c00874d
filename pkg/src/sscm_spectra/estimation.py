"""
Bias-corrected moment estimation of a discrete population spectral distribution from the SSCM
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Tuple

import numpy as np
from scipy.stats import norm

from .exceptions import ContractViolation, SscmError
from .moments import BETA, MomentVector, beta_to_gamma, esd_moments, gamma_to_beta, jacobian_g2
from .psd import (
    DiscretePSD,
    full_parameter_gradient,
    g1_solve,
    jacobian_g1,
    theta_to_moments,
)
from .sampling import SampleMatrix, Sscm, sscm_from
from .series import covariance_matrix, mean_correction

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ParameterInterval:
    """Normal confidence interval for one parameter"""

    name: str
    estimate: float
    std_error: float
    lower: float
    upper: float

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'estimate': self.estimate,
            'std_error': self.std_error,
            'lower': self.lower,
            'upper': self.upper,
        }


@dataclass(frozen=True)
class PsdEstimate:
    """
    Result of estimate_psd

    theta_cov is the asymptotic covariance of p (theta_hat - theta) for the free
    parameters; ci covers all 2d parameters (a_1, w_1, ..., a_d, w_d).
    """

    psd: DiscretePSD
    theta_cov: np.ndarray
    gamma_corrected: MomentVector
    ci: Tuple[ParameterInterval, ...]
    level: float
    n: int
    p: int
    beta_hat: MomentVector
    first_pass: DiscretePSD
    diagnostics: Dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def ratio(self) -> float:
        return self.p / self.n

    def interval(self, name: str) -> ParameterInterval:
        """Look up an interval by parameter name ('a1', 'w2', ...)"""
        for item in self.ci:
            if item.name == name:
                return item
        raise KeyError(name)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'order': self.psd.order,
            'n': self.n,
            'p': self.p,
            'level': self.level,
            'atoms': self.psd.atoms.tolist(),
            'weights': self.psd.weights.tolist(),
            'standard_errors': {item.name: item.std_error for item in self.ci},
            'intervals': [item.to_dict() for item in self.ci],
            'theta_cov': self.theta_cov.tolist(),
            'gamma_corrected': self.gamma_corrected.values.tolist(),
            'beta_hat': self.beta_hat.values.tolist(),
            'diagnostics': self.diagnostics,
        }


def bias_corrected_moments(b: Sscm, d: int, k: int, stage: str = 'first-pass'
                           ) -> Tuple[MomentVector, MomentVector, DiscretePSD]:
    """
    ESD moments, their bias-corrected version and the first-pass PSD

    The correction v is evaluated once at the d-atom PSD fitted to the
    uncorrected moments: beta_hat* = beta_hat - v / p.

    Args:
        b: SSCM of the data
        d: Order of the first-pass PSD
        k: Highest moment order (>= 2d - 1 and >= 2)
        stage: Stage name attached to first-pass failures

    Returns:
        (beta_hat, gamma_hat*, first-pass PSD)
    """
    beta_hat = esd_moments(b, k)
    c = b.ratio
    gamma_first = beta_to_gamma(beta_hat, c)
    try:
        first_pass = g1_solve(gamma_first.truncated(max(2 * d - 1, 1)), d)
    except SscmError as exc:
        raise exc.at_stage(stage)
    v = mean_correction(first_pass, c, k)
    corrected = beta_hat.values.copy()
    corrected[1:] -= v / b.p
    beta_star = MomentVector(BETA, corrected, ratio_c=c)
    return beta_hat, beta_to_gamma(beta_star, c), first_pass


def theta_covariance(psd: DiscretePSD, c: float) -> np.ndarray:
    """
    Asymptotic covariance J1 J2 Psi J2' J1' of p (theta_hat* - theta)

    Args:
        psd: PSD of order d >= 2 (evaluation point)
        c: Dimension to sample size ratio

    Returns:
        (2d - 2) x (2d - 2) symmetric matrix
    """
    k = 2 * psd.order - 1
    j1 = jacobian_g1(psd)
    j2 = jacobian_g2(gamma_to_beta(theta_to_moments(psd, k), c))
    psi = covariance_matrix(psd, c, k)
    composite = j1 @ j2
    cov = composite @ psi @ composite.T
    return 0.5 * (cov + cov.T)


def estimate_psd(data: SampleMatrix, d: int, level: float = 0.95) -> PsdEstimate:
    """
    Estimate a d-atom PSD from elliptical (or spatial-sign) observations

    Args:
        data: n x p sample matrix
        d: Number of atoms
        level: Confidence level of the intervals

    Returns:
        PsdEstimate

    Raises:
        InvalidMomentSequenceError, InfeasiblePsdError: with stage 'first-pass' or 'corrected'
    """
    if d < 1:
        raise ContractViolation(f"order must be at least 1, got {d}")
    if not 0 < level < 1:
        raise ContractViolation(f"confidence level must lie in (0, 1), got {level}")
    if data.n < 2 * d or data.p < 2 * d:
        raise ContractViolation(f"order {d} needs n, p >= {2 * d}, got n={data.n}, p={data.p}")

    b = sscm_from(data)
    c = b.ratio
    k = max(2 * d - 1, 2)
    beta_hat, gamma_star, first_pass = bias_corrected_moments(b, d, k)

    diagnostics: Dict[str, Any] = {}
    try:
        psd = g1_solve(gamma_star.truncated(max(2 * d - 1, 1)), d, diagnostics=diagnostics)
    except SscmError as exc:
        raise exc.at_stage('corrected')

    if d == 1:
        theta_cov = np.zeros((0, 0))
        full_cov = np.zeros((2, 2))
    else:
        try:
            theta_cov = theta_covariance(psd, c)
        except SscmError as exc:
            raise exc.at_stage('covariance')
        gradient = full_parameter_gradient(psd)
        full_cov = gradient @ theta_cov @ gradient.T

    quantile = norm.ppf(0.5 * (1.0 + level))
    std_errors = np.sqrt(np.maximum(np.diag(full_cov), 0.0)) / b.p
    intervals = []
    for name, value, se in zip(psd.parameter_names(full=True), psd.full_theta, std_errors):
        intervals.append(ParameterInterval(name, float(value), float(se),
                                           float(value - quantile * se), float(value + quantile * se)))

    logger.debug(f"Estimated {psd} from n={b.n}, p={b.p}")
    return PsdEstimate(
        psd=psd,
        theta_cov=theta_cov,
        gamma_corrected=gamma_star,
        ci=tuple(intervals),
        level=float(level),
        n=b.n,
        p=b.p,
        beta_hat=beta_hat,
        first_pass=first_pass,
        diagnostics=diagnostics,
    )
