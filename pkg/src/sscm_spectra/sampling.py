"""
Elliptical sampling, spatial-sign transform and the spatial-sign covariance matrix
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Optional, Sequence, TextIO, Union

import numpy as np
from scipy import linalg

from .exceptions import (
    ContractViolation,
    DegenerateObservationError,
    InputValidationError,
    InvalidDimensionError,
)

if TYPE_CHECKING:
    from .psd import DiscretePSD

logger = logging.getLogger(__name__)

RAW = 'raw'
SPATIAL_SIGN = 'spatial_sign'

# Sscm construction checks
SYMMETRY_TOL = 1e-12
TRACE_TOL = 1e-9
PSD_SLACK = 1e-9

RADIUS_KINDS = ('constant', 'chi', 'lognormal', 'pareto')


def replication_rng(seed: int, index: int, cell: int = 0) -> np.random.Generator:
    """
    Counter-based random stream for one replication

    The Philox key is built from (seed, cell, index) so the stream of a
    replication never depends on which worker runs it or in what order.

    Args:
        seed: 64-bit experiment seed
        index: Replication index
        cell: Index of the experiment cell (n, c, x combination)

    Returns:
        numpy Generator backed by Philox
    """
    key = ((int(seed) & 0xFFFFFFFFFFFFFFFF) << 64) | ((int(cell) & 0xFFFFFFFF) << 32) | (int(index) & 0xFFFFFFFF)
    return np.random.Generator(np.random.Philox(key=key))


def _frozen(values: np.ndarray) -> np.ndarray:
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class ShapeSpectrum:
    """Spectrum of the shape matrix T = AA', normalized to tr(T) = p"""

    eigenvalues: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.eigenvalues, dtype=float).ravel().copy()
        if values.size == 0:
            raise InvalidDimensionError("shape spectrum needs at least one eigenvalue")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise InputValidationError("shape eigenvalues must be finite and strictly positive")

        mean = values.mean()
        if abs(mean - 1.0) > 1e-6:
            logger.warning(f"Shape spectrum mean {mean:.6g} rescaled to 1 (tr(T) = p)")
        values = values / mean
        object.__setattr__(self, 'eigenvalues', _frozen(values))

    @property
    def p(self) -> int:
        """Dimension"""
        return self.eigenvalues.size

    @classmethod
    def identity(cls, p: int) -> "ShapeSpectrum":
        """Spherical shape of dimension p"""
        if p < 1:
            raise InvalidDimensionError(f"dimension must be positive, got {p}")
        return cls(np.ones(p))

    @classmethod
    def from_psd(cls, psd: "DiscretePSD", p: int) -> "ShapeSpectrum":
        """
        Realize a discrete population spectrum on p coordinates

        Atom multiplicities are allocated by largest remainder so they sum to p.

        Args:
            psd: Discrete population spectral distribution
            p: Dimension

        Returns:
            ShapeSpectrum with eigenvalues sorted ascending
        """
        if p < 1:
            raise InvalidDimensionError(f"dimension must be positive, got {p}")
        exact = np.asarray(psd.weights) * p
        counts = np.floor(exact).astype(int)
        shortfall = p - counts.sum()
        if shortfall > 0:
            order = np.argsort(-(exact - counts), kind='stable')
            counts[order[:shortfall]] += 1
        if np.any(counts == 0):
            logger.warning(f"Dimension p={p} too small to carry every atom of {psd}")
        return cls(np.repeat(np.asarray(psd.atoms), counts))


@dataclass(frozen=True)
class RadiusLaw:
    """
    Law of the radius w in x = w A u

    kind is one of 'constant' (w = 1), 'chi' (chi with p degrees of freedom,
    the Gaussian case), 'lognormal' (mu, sigma) and 'pareto' (alpha, scale 1).
    """

    kind: str = 'chi'
    mu: float = 0.0
    sigma: float = 1.0
    alpha: float = 3.0

    def __post_init__(self):
        if self.kind not in RADIUS_KINDS:
            raise InputValidationError(f"unknown radius law '{self.kind}', expected one of {RADIUS_KINDS}")
        if self.kind == 'lognormal' and not self.sigma > 0:
            raise InputValidationError(f"lognormal sigma must be positive, got {self.sigma}")
        if self.kind == 'pareto' and not self.alpha > 1:
            raise InputValidationError(f"pareto alpha must exceed 1, got {self.alpha}")

    @classmethod
    def parse(cls, text: str) -> "RadiusLaw":
        """
        Parse 'constant', 'chi', 'lognormal:mu:sigma' or 'pareto:alpha'

        Args:
            text: Radius law description

        Returns:
            RadiusLaw
        """
        parts = [part.strip() for part in str(text).split(':')]
        kind, args = parts[0].lower(), parts[1:]
        try:
            if kind == 'lognormal':
                mu = float(args[0]) if len(args) > 0 else 0.0
                sigma = float(args[1]) if len(args) > 1 else 1.0
                return cls(kind, mu=mu, sigma=sigma)
            if kind == 'pareto':
                return cls(kind, alpha=float(args[0]) if args else 3.0)
        except ValueError as exc:
            raise InputValidationError(f"cannot parse radius law '{text}': {exc}") from exc
        return cls(kind)

    def describe(self) -> str:
        """Inverse of parse"""
        if self.kind == 'lognormal':
            return f"lognormal:{self.mu:g}:{self.sigma:g}"
        if self.kind == 'pareto':
            return f"pareto:{self.alpha:g}"
        return self.kind

    def sample(self, n: int, p: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n radii for dimension p"""
        if self.kind == 'constant':
            return np.ones(n)
        if self.kind == 'chi':
            return np.sqrt(rng.chisquare(p, size=n))
        if self.kind == 'lognormal':
            return rng.lognormal(self.mu, self.sigma, size=n)
        return rng.pareto(self.alpha, size=n) + 1.0


@dataclass(frozen=True)
class SampleMatrix:
    """n x p data matrix with its provenance flavor"""

    data: np.ndarray
    flavor: str = RAW

    def __post_init__(self):
        data = np.array(self.data, dtype=float, ndmin=2)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise InvalidDimensionError(f"sample matrix must be a non-empty n x p array, got shape {data.shape}")
        if self.flavor not in (RAW, SPATIAL_SIGN):
            raise InputValidationError(f"unknown sample flavor '{self.flavor}'")
        bad = np.argwhere(~np.isfinite(data))
        if bad.size:
            row, col = (int(i) for i in bad[0])
            raise InputValidationError(f"non-finite entry {data[row, col]} at row {row}, column {col}")
        if self.flavor == SPATIAL_SIGN:
            norms = np.einsum('ij,ij->i', data, data)
            if np.max(np.abs(norms - data.shape[1])) > 1e-9 * max(1.0, data.shape[1]):
                raise ContractViolation("spatial-sign rows must have squared norm p")
        object.__setattr__(self, 'data', _frozen(data))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]

    def scaled(self, factor: float) -> "SampleMatrix":
        """Multiply every observation by a constant"""
        return SampleMatrix(self.data * factor, self.flavor)


@dataclass(frozen=True)
class Sscm:
    """
    Spatial-sign covariance matrix B_n = Y'Y / n

    Construction checks symmetry and trace p. A matrix passed without its
    spatial-sign rows is also checked for positive semidefiniteness; with the
    rows at hand B_n = Y'Y / n is semidefinite already.
    """

    matrix: np.ndarray
    n: int
    signs: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < 1:
            raise ContractViolation(f"SSCM must be square, got shape {matrix.shape}")
        if int(self.n) < 1:
            raise InvalidDimensionError(f"SSCM needs n >= 1, got {self.n}")
        if not np.all(np.isfinite(matrix)):
            raise ContractViolation("SSCM has non-finite entries")
        p = matrix.shape[0]
        if np.max(np.abs(matrix - matrix.T)) > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(matrix)))):
            raise ContractViolation("SSCM must be symmetric")
        if abs(np.trace(matrix) - p) > TRACE_TOL * max(1, p):
            raise ContractViolation(f"SSCM trace must equal p = {p}, got {np.trace(matrix)!r}")
        if self.signs is None:
            try:
                linalg.cholesky(matrix + PSD_SLACK * p * np.eye(p), lower=True)
            except linalg.LinAlgError as exc:
                raise ContractViolation("SSCM must be positive semidefinite") from exc
        object.__setattr__(self, 'matrix', _frozen(matrix))

    @property
    def p(self) -> int:
        return self.matrix.shape[0]

    @property
    def ratio(self) -> float:
        """Dimension to sample size ratio c_n = p / n"""
        return self.p / self.n

    def eigenvalues(self) -> np.ndarray:
        """
        Eigenvalues of B_n in ascending order

        When p > n and the spatial-sign rows are at hand, the nonzero spectrum
        comes from the n x n Gram matrix and the remaining p - n eigenvalues are zero.
        """
        if self.signs is not None and self.p > self.n:
            gram = self.signs @ self.signs.T / self.n
            nonzero = linalg.eigvalsh(gram)
            return np.concatenate([np.zeros(self.p - self.n), nonzero])
        return linalg.eigvalsh(self.matrix)


def sample_sphere(p: int, rng: np.random.Generator) -> np.ndarray:
    """
    Draw a point uniformly on the unit sphere of R^p

    Args:
        p: Dimension
        rng: Random stream

    Returns:
        Unit vector of length p
    """
    if p < 1:
        raise InvalidDimensionError(f"dimension must be positive, got {p}")
    while True:
        z = rng.standard_normal(p)
        norm = np.linalg.norm(z)
        if norm > 0:
            return z / norm


def _sphere_rows(n: int, p: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, p))
    norms = np.linalg.norm(z, axis=1)
    # zero draws are resampled
    for row in np.flatnonzero(norms == 0):
        while norms[row] == 0:
            z[row] = rng.standard_normal(p)
            norms[row] = np.linalg.norm(z[row])
    return z / norms[:, None]


def sample_elliptical(n: int, shape: ShapeSpectrum, radius: RadiusLaw,
                      rng: np.random.Generator) -> SampleMatrix:
    """
    Draw n i.i.d. observations x = w A u with A = diag(sqrt(shape))

    Directions are drawn before radii, so two calls with the same stream and
    different radius laws share their directions.

    Args:
        n: Sample size
        shape: Shape spectrum (p eigenvalues)
        radius: Radius law
        rng: Random stream

    Returns:
        SampleMatrix of raw flavor
    """
    if n < 1:
        raise InvalidDimensionError(f"sample size must be positive, got {n}")
    p = shape.p
    directions = _sphere_rows(n, p, rng)
    radii = radius.sample(n, p, rng)
    data = radii[:, None] * directions * np.sqrt(shape.eigenvalues)[None, :]
    return SampleMatrix(data, RAW)


def spatial_sign(x: SampleMatrix) -> SampleMatrix:
    """
    Project observations onto the sphere of radius sqrt(p)

    Args:
        x: Raw sample matrix

    Returns:
        SampleMatrix of spatial_sign flavor
    """
    if x.flavor != RAW:
        raise ContractViolation(f"spatial_sign expects raw observations, got '{x.flavor}'")
    norms = np.linalg.norm(x.data, axis=1)
    zero_rows = np.flatnonzero(norms == 0)
    if zero_rows.size:
        raise DegenerateObservationError(int(zero_rows[0]))
    return SampleMatrix(np.sqrt(x.p) * x.data / norms[:, None], SPATIAL_SIGN)


def sscm(y: SampleMatrix) -> Sscm:
    """
    Spatial-sign covariance matrix of spatial-sign observations

    Args:
        y: Spatial-sign sample matrix

    Returns:
        Sscm with B = Y'Y / n
    """
    if y.flavor != SPATIAL_SIGN:
        raise ContractViolation(f"sscm expects spatial-sign observations, got '{y.flavor}'")
    matrix = y.data.T @ y.data / y.n
    matrix = 0.5 * (matrix + matrix.T)
    return Sscm(matrix, y.n, signs=y.data)


def sscm_from(data: SampleMatrix) -> Sscm:
    """SSCM of a sample of either flavor"""
    signs = data if data.flavor == SPATIAL_SIGN else spatial_sign(data)
    return sscm(signs)


def _is_numeric_line(line: str) -> bool:
    try:
        np.array(line.strip().split(','), dtype=float)
    except ValueError:
        return False
    return True


def load_csv(path: Union[str, Path]) -> SampleMatrix:
    """
    Read an n x p comma-separated matrix (rows are observations)

    A first line that does not parse as numbers is treated as a header.

    Args:
        path: CSV file

    Returns:
        SampleMatrix of raw flavor

    Raises:
        InputValidationError: empty file, ragged rows, or a non-numeric or non-finite entry
    """
    with open(path, 'r', encoding='utf-8') as f:
        lines = [line for line in f if line.strip()]
    header = 1 if lines and not _is_numeric_line(lines[0]) else 0
    if len(lines) <= header:
        raise InputValidationError(f"no observations in {path}")
    try:
        data = np.genfromtxt(lines, delimiter=',', skip_header=header, dtype=float)
    except ValueError as exc:
        raise InputValidationError(f"malformed rows in {path}: {exc}") from exc
    # genfromtxt squeezes single rows and columns
    data = np.reshape(data, (-1, lines[header].count(',') + 1))
    # text cells come back as NaN
    bad = np.argwhere(~np.isfinite(data))
    if bad.size:
        row, col = (int(i) for i in bad[0])
        raise InputValidationError(f"non-numeric or non-finite entry at row {row + 1}, column {col + 1} of {path}")
    logger.info(f"Loaded {data.shape[0]} x {data.shape[1]} observations from {path}")
    return SampleMatrix(data, RAW)


def write_csv(sample: SampleMatrix, target: Union[str, Path, TextIO],
              header: Optional[Sequence[str]] = None) -> None:
    """
    Write a sample matrix as CSV with full float precision

    Args:
        sample: Matrix to write
        target: Path or open text stream
        header: Optional column names (defaults to x1..xp)
    """
    names = list(header) if header is not None else [f"x{j + 1}" for j in range(sample.p)]
    if len(names) != sample.p:
        raise ContractViolation(f"{len(names)} column names for {sample.p} columns")
    np.savetxt(target, sample.data, fmt='%.17g', delimiter=',', header=','.join(names), comments='')
