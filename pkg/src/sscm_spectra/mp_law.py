"""
Generalized Marchenko-Pastur law of the SSCM: Stieltjes transform, density and support

For a population spectral distribution H and ratio c, the Stieltjes transform m(z)
of the limiting spectral distribution solves

    m = integral dH(t) / (t (1 - c - c z m) - z),

and the companion transform m_(z) = c m - (1 - c) / z solves

    z = -1 / m_ + c integral t / (1 + t m_) dH(t).
"""
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .exceptions import ContractViolation, SolverFailureError, SupportResolutionError
from .psd import DiscretePSD

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-13
VERIFY_TOL = 1e-12
DEFAULT_MAX_ITER = 10000
DEFAULT_EPS = 1e-6
SUPPORT_GRID = 4096
# smallest relative tolerance brentq accepts
BRENTQ_RTOL = 4 * np.finfo(float).eps

STALL_WINDOW = 500
CONTINUATION_START = 1e3
STEPS_PER_DECADE = 8


@dataclass(frozen=True)
class StieltjesPoint:
    """Solved transform at z: m for F^{c,H}, m_under for the companion law"""

    z: complex
    m: complex
    m_under: complex
    residual: float = 0.0

    @property
    def density(self) -> float:
        """Im(m) / pi"""
        return self.m.imag / np.pi


@dataclass(frozen=True)
class SupportIntervals:
    """Disjoint closed intervals of the positive support plus the atom at zero"""

    intervals: Tuple[Tuple[float, float], ...]
    zero_atom_mass: float = 0.0

    def __post_init__(self):
        intervals = tuple((float(lo), float(hi)) for lo, hi in self.intervals)
        for lo, hi in intervals:
            if not lo < hi:
                raise ContractViolation(f"empty support interval [{lo}, {hi}]")
        for (_, hi), (lo, _) in zip(intervals, intervals[1:]):
            if not hi < lo:
                raise ContractViolation("support intervals must be sorted and disjoint")
        object.__setattr__(self, 'intervals', intervals)

    @property
    def has_zero_atom(self) -> bool:
        return self.zero_atom_mass > 0

    @property
    def lower(self) -> float:
        return self.intervals[0][0]

    @property
    def upper(self) -> float:
        return self.intervals[-1][1]

    def contains(self, x, margin: float = 0.0) -> np.ndarray:
        """Whether each x lies in some interval widened by margin"""
        x = np.asarray(x, dtype=float)
        inside = np.zeros(x.shape, dtype=bool)
        for lo, hi in self.intervals:
            inside |= (x >= lo - margin) & (x <= hi + margin)
        return inside


@dataclass(frozen=True)
class DensityCurve:
    """Density values on a grid; failed points carry NaN"""

    x: np.ndarray
    density: np.ndarray
    failed: Tuple[int, ...] = ()

    def rows(self) -> List[Tuple[float, float]]:
        return [(float(a), float(b)) for a, b in zip(self.x, self.density)]


def _fixed_point_map(m: np.ndarray, z: np.ndarray, atoms: np.ndarray, weights: np.ndarray,
                     c: float) -> np.ndarray:
    denom = atoms[None, :] * (1.0 - c - c * z * m)[:, None] - z[:, None]
    return (weights[None, :] / denom).sum(axis=1)


def _residual(m: np.ndarray, z: np.ndarray, atoms: np.ndarray, weights: np.ndarray,
              c: float) -> np.ndarray:
    with np.errstate(divide='ignore', invalid='ignore'):
        r = np.abs(m - _fixed_point_map(m, z, atoms, weights, c)) / np.maximum(1.0, np.abs(m))
    return np.where(np.isfinite(r), r, np.inf)


def _companion(m: np.ndarray, z: np.ndarray, c: float) -> np.ndarray:
    return c * m - (1.0 - c) / z


def _from_companion(m_under: np.ndarray, z: np.ndarray, c: float) -> np.ndarray:
    return (m_under + (1.0 - c) / z) / c


def _in_class(m: np.ndarray, z: np.ndarray, c: float) -> np.ndarray:
    m_under = _companion(m, z, c)
    slack = 1e-10 * np.maximum(1.0, np.abs(m))
    return (m.imag >= -slack) & (m_under.imag >= -slack)


def _fixed_point(z: np.ndarray, atoms: np.ndarray, weights: np.ndarray, c: float,
                 tol: float, max_iter: int) -> Tuple[np.ndarray, np.ndarray]:
    # damped iteration started at the c = 0 solution; damping halves when the residual grows
    m = (weights[None, :] / (atoms[None, :] - z[:, None])).sum(axis=1)
    residual = _residual(m, z, atoms, weights, c)
    damping = np.ones(z.size)
    active = residual > tol
    checkpoint = residual.copy()
    for iteration in range(1, max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
            update = _fixed_point_map(m[idx], z[idx], atoms, weights, c)
            trial = (1.0 - damping[idx]) * m[idx] + damping[idx] * update
            trial_res = _residual(trial, z[idx], atoms, weights, c)
        worse = ~(trial_res < residual[idx])
        damping[idx[worse]] *= 0.5
        accept = ~worse
        m[idx[accept]] = trial[accept]
        residual[idx[accept]] = trial_res[accept]
        active[idx] = (residual[idx] > tol) & (damping[idx] >= 1e-12)
        if iteration % STALL_WINDOW == 0:
            stalled = active & (residual > 0.1 * checkpoint)
            active &= ~stalled
            checkpoint = residual.copy()
    return m, residual


def _inverse_map_residual(mu: np.ndarray, z: np.ndarray, atoms: np.ndarray,
                          weights: np.ndarray, c: float) -> Tuple[np.ndarray, np.ndarray]:
    # F(m_) = -1/m_ + c sum w a / (1 + a m_) - z and its derivative
    one_plus = 1.0 + atoms[None, :] * mu[:, None]
    f = -1.0 / mu + c * (weights * atoms / one_plus).sum(axis=1) - z
    fp = 1.0 / mu ** 2 - c * (weights * atoms ** 2 / one_plus ** 2).sum(axis=1)
    return f, fp


def _newton_continuation(z: np.ndarray, atoms: np.ndarray, weights: np.ndarray, c: float,
                         tol: float) -> np.ndarray:
    # follow the companion transform from Im z = 1e3 down to the target along a geometric path
    target = z.imag
    top = np.maximum(CONTINUATION_START, target)
    decades = float(np.max(np.log10(top / target)))
    steps = max(1, int(np.ceil(STEPS_PER_DECADE * decades)))
    z_path = z.real + 1j * top
    mu = -1.0 / z_path
    for step in range(steps + 1):
        t = step / steps
        z_path = z.real + 1j * np.exp((1.0 - t) * np.log(top) + t * np.log(target))
        final = step == steps
        # the last step iterates down to rounding level, earlier ones only track the path
        threshold = (1e-16 if final else 1e3 * tol) * np.maximum(1.0, np.abs(z_path))
        active = np.ones(mu.size, dtype=bool)
        for _ in range(100 if final else 30):
            with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
                f, fp = _inverse_map_residual(mu, z_path, atoms, weights, c)
                active &= np.abs(f) > threshold
                if not np.any(active):
                    break
                delta = np.where(active, -f / fp, 0.0)
                lam = np.ones(mu.size)
                trial = mu + delta
                for _ in range(40):
                    f_trial, _ = _inverse_map_residual(trial, z_path, atoms, weights, c)
                    bad = active & ((trial.imag <= 0) | ~(np.abs(f_trial) < np.abs(f)))
                    if not np.any(bad):
                        break
                    lam = np.where(bad, 0.5 * lam, lam)
                    trial = mu + lam * delta
            # points whose line search failed sit at rounding level for this step
            moved = active & ~bad
            mu = np.where(moved, trial, mu)
            active &= moved
    return _from_companion(mu, z, c)


def _solve_many(z: np.ndarray, psd: DiscretePSD, c: float, tol: float = DEFAULT_TOL,
                max_iter: int = DEFAULT_MAX_ITER) -> Tuple[np.ndarray, np.ndarray]:
    """Solve at every z (Im z > 0); returns (m, residual)"""
    atoms, weights = np.asarray(psd.atoms), np.asarray(psd.weights)
    if c == 0:
        m = (weights[None, :] / (atoms[None, :] - z[:, None])).sum(axis=1)
        return m, np.zeros(z.size)

    m, residual = _fixed_point(z, atoms, weights, c, tol, max_iter)
    retry = (residual > VERIFY_TOL) | ~_in_class(m, z, c)
    if np.any(retry):
        logger.debug(f"Fixed point left {int(np.count_nonzero(retry))} of {z.size} points, "
                     f"switching to Newton continuation")
        idx = np.flatnonzero(retry)
        candidate = _newton_continuation(z[idx], atoms, weights, c, tol)
        cand_res = _residual(candidate, z[idx], atoms, weights, c)
        better = (cand_res < residual[idx]) | ~_in_class(m[idx], z[idx], c)
        m[idx[better]] = candidate[better]
        residual[idx[better]] = cand_res[better]
    return m, residual


def _check_ratio(c: float) -> float:
    c = float(c)
    if not c >= 0 or not np.isfinite(c):
        raise ContractViolation(f"ratio c must be finite and nonnegative, got {c}")
    return c


def stieltjes_solve(z: complex, psd: DiscretePSD, c: float, tol: float = DEFAULT_TOL,
                    max_iter: int = DEFAULT_MAX_ITER) -> StieltjesPoint:
    """
    Stieltjes transform of the limiting spectral distribution at z

    Damped fixed-point iteration on the m equation, with Newton continuation on
    the companion equation for points where the iteration stalls.

    Args:
        z: Point of the upper half plane
        psd: Population spectral distribution
        c: Dimension to sample size ratio
        tol: Iteration tolerance
        max_iter: Maximum fixed-point iterations

    Returns:
        StieltjesPoint with residual below 1e-12

    Raises:
        SolverFailureError: no solution met the verification tolerance
    """
    z = complex(z)
    if not z.imag > 0:
        raise ContractViolation(f"z must lie in the upper half plane, got {z}")
    c = _check_ratio(c)
    m, residual = _solve_many(np.array([z]), psd, c, tol, max_iter)
    if not residual[0] <= VERIFY_TOL:
        raise SolverFailureError(f"Stieltjes solver did not converge at z={z}", float(residual[0]))
    m_value = complex(m[0])
    return StieltjesPoint(z, m_value, complex(_companion(m[:1], np.array([z]), c)[0]), float(residual[0]))


def density_eval(x_grid: Sequence[float], psd: DiscretePSD, c: float, eps: float = DEFAULT_EPS,
                 tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> DensityCurve:
    """
    Density f(x) ~ Im m(x + i eps) / pi on a grid

    Args:
        x_grid: Real evaluation points
        psd: Population spectral distribution
        c: Dimension to sample size ratio
        eps: Imaginary offset (> 0)
        tol: Iteration tolerance
        max_iter: Maximum fixed-point iterations

    Returns:
        DensityCurve; points where the solver failed hold NaN
    """
    if not eps > 0:
        raise ContractViolation(f"eps must be positive, got {eps}")
    c = _check_ratio(c)
    x = np.asarray(x_grid, dtype=float).ravel()
    if x.size == 0:
        return DensityCurve(x, np.zeros(0))
    m, residual = _solve_many(x + 1j * eps, psd, c, tol, max_iter)
    density = np.maximum(m.imag / np.pi, 0.0)
    failed = np.flatnonzero(~(residual <= VERIFY_TOL))
    if failed.size:
        logger.warning(f"Density solver failed at {failed.size} of {x.size} points "
                       f"(first x={x[failed[0]]:.6g}, residual {residual[failed[0]]:.3g})")
        density = density.copy()
        density[failed] = np.nan
    return DensityCurve(x, density, tuple(int(i) for i in failed))


def _z_of(mu, atoms, weights, c):
    mu = np.asarray(mu, dtype=float)
    return -1.0 / mu + c * (weights * atoms / (1.0 + np.multiply.outer(mu, atoms))).sum(axis=-1)


def _z_prime(mu, atoms, weights, c):
    mu = np.asarray(mu, dtype=float)
    return 1.0 / mu ** 2 - c * (weights * atoms ** 2 / (1.0 + np.multiply.outer(mu, atoms)) ** 2).sum(axis=-1)


def _segment_grid(lo: float, hi: float, points: int) -> np.ndarray:
    if np.isinf(lo):
        return hi - np.logspace(-10, 10, points)[::-1]
    if np.isinf(hi):
        return lo + np.logspace(-10, 10, points)
    k = np.arange(points)
    t = 0.5 * (1.0 - np.cos(np.pi * (k + 0.5) / points))
    return lo + (hi - lo) * t


def _boundary_limit(end: float, left: bool) -> float:
    # limit of z(m_) approaching a segment end from inside the segment
    if np.isinf(end):
        return 0.0
    if end == 0.0:
        return -np.inf if left else np.inf
    return np.inf if left else -np.inf


def _increasing_images(lo: float, hi: float, atoms, weights, c, points) -> List[Tuple[float, float]]:
    grid = _segment_grid(lo, hi, points)
    with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
        slope = _z_prime(grid, atoms, weights, c)
    positive = slope > 0
    if not np.any(positive):
        return []

    def critical(i):
        a, b = grid[i - 1], grid[i]
        try:
            return brentq(_z_prime, a, b, args=(atoms, weights, c),
                          xtol=1e-15, rtol=BRENTQ_RTOL, maxiter=200)
        except (ValueError, RuntimeError) as exc:
            raise SupportResolutionError(f"cannot bracket a support edge in ({a}, {b})") from exc

    images = []
    edges = np.flatnonzero(np.diff(positive.astype(int)))
    starts = ([0] if positive[0] else []) + [i + 1 for i in edges if not positive[i]]
    ends = [i for i in edges if positive[i]] + ([points - 1] if positive[-1] else [])
    for start, end in zip(starts, ends):
        z_lo = _boundary_limit(lo, True) if start == 0 else float(_z_of(critical(start), atoms, weights, c))
        z_hi = _boundary_limit(hi, False) if end == points - 1 else float(_z_of(critical(end + 1), atoms, weights, c))
        if z_lo < z_hi:
            images.append((z_lo, z_hi))
    return images


def support_find(psd: DiscretePSD, c: float, grid: int = SUPPORT_GRID) -> SupportIntervals:
    """
    Support of the limiting spectral distribution

    Real x lies outside the support exactly when x = z(m_) on an increasing
    branch of z(m_) = -1/m_ + c sum w a / (1 + a m_). The branches are scanned
    between the poles {-1/a_i} and 0, turning points refined by brentq.

    Args:
        psd: Population spectral distribution
        c: Dimension to sample size ratio (> 0)
        grid: Scan points per segment

    Returns:
        SupportIntervals with the zero atom mass max(0, 1 - 1/c)
    """
    c = _check_ratio(c)
    if c == 0:
        raise ContractViolation("support_find needs c > 0 (the c = 0 law is H itself)")
    atoms, weights = np.asarray(psd.atoms), np.asarray(psd.weights)
    poles = np.sort(np.append(-1.0 / atoms, 0.0))
    ends = np.concatenate([[-np.inf], poles, [np.inf]])

    gaps = []
    for lo, hi in zip(ends[:-1], ends[1:]):
        gaps.extend(_increasing_images(lo, hi, atoms, weights, c, grid))

    gaps = sorted((max(lo, 0.0), hi) for lo, hi in gaps if hi > 0)
    intervals = []
    cursor = 0.0
    for lo, hi in gaps:
        if lo > cursor:
            intervals.append((cursor, lo))
        cursor = max(cursor, hi)
    if np.isfinite(cursor):
        raise SupportResolutionError(f"support of the limiting law appears unbounded above {cursor:.6g}")

    scale = max(1.0, max((hi for _, hi in intervals), default=1.0))
    intervals = [(lo, hi) for lo, hi in intervals if hi - lo > 1e-12 * scale]
    if not intervals:
        raise SupportResolutionError("no support interval found")
    return SupportIntervals(tuple(intervals), max(0.0, 1.0 - 1.0 / c))
