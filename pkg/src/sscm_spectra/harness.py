"""
Monte Carlo experiments: estimation accuracy, size and power of the order test, and LSD checks
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
import pandas as pd

from .estimation import estimate_psd
from .exceptions import ContractViolation, InputValidationError, InvalidDimensionError, SscmError
from .moments import esd_moments, gamma_to_beta
from .mp_law import SUPPORT_GRID, support_find
from .order_test import run_test
from .psd import DiscretePSD, theta_to_moments
from .sampling import RadiusLaw, ShapeSpectrum, replication_rng, sample_elliptical, sscm_from, write_csv

logger = logging.getLogger(__name__)

ESTIMATION = 'estimation'
SIZE_POWER = 'size_power'
DENSITY = 'density'
DESIGNS = (ESTIMATION, SIZE_POWER, DENSITY)

DENSITY_ORDERS = 4


def model1() -> DiscretePSD:
    """0.5 delta_0.5 + 0.5 delta_1.5"""
    return DiscretePSD([0.5, 1.5], [0.5, 0.5])


def model2() -> DiscretePSD:
    """0.3 delta_0.2 + 0.4 delta_1 + 0.3 delta_1.8"""
    return DiscretePSD([0.2, 1.0, 1.8], [0.3, 0.4, 0.3])


def model3(x: float) -> DiscretePSD:
    """0.5 delta_{1-x} + 0.5 delta_{1+x} (delta_1 at x = 0)"""
    return DiscretePSD.from_mixture([1.0 - x, 1.0 + x], [0.5, 0.5])


def model4(x: float) -> DiscretePSD:
    """Two pairs of atoms split by x around 0.5 and 1.5"""
    return DiscretePSD.from_mixture([0.5 - x, 0.5 + x, 1.5 - x, 1.5 + x], [0.25] * 4)


MODEL_FAMILIES: Dict[str, Callable[[float], DiscretePSD]] = {
    'model3': model3,
    'model4': model4,
}


def dimension_for(n: int, c: float) -> int:
    """p = round(n c), warning when n c is not an integer"""
    exact = n * c
    p = int(round(exact))
    if abs(exact - p) > 1e-9:
        logger.warning(f"n*c = {exact:g} is not an integer, using p = {p}")
    if p < 1:
        raise InvalidDimensionError(f"n={n}, c={c} gives dimension {p}")
    return p


@dataclass(frozen=True)
class ExperimentSpec:
    """
    One Monte Carlo design

    Either psd is given, or family names an entry of MODEL_FAMILIES evaluated
    at every x in x_values. order is d for estimation and d0 for the test
    (defaulting to the PSD order).
    """

    design: str
    psd: Optional[DiscretePSD] = None
    c: Tuple[float, ...] = (1.0,)
    n_list: Tuple[int, ...] = (400,)
    replications: int = 2000
    level: float = 0.95
    alpha: float = 0.05
    seed: int = 20240501
    radius: RadiusLaw = field(default_factory=RadiusLaw)
    threads: int = 1
    order: Optional[int] = None
    family: Optional[str] = None
    x_values: Tuple[float, ...] = ()
    name: str = ''

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise InputValidationError(f"unknown design '{self.design}', expected one of {DESIGNS}")
        c = tuple(float(v) for v in np.atleast_1d(self.c))
        n_list = tuple(int(v) for v in np.atleast_1d(self.n_list))
        object.__setattr__(self, 'c', c)
        object.__setattr__(self, 'n_list', n_list)
        object.__setattr__(self, 'x_values', tuple(float(v) for v in self.x_values))
        if self.replications < 1:
            raise InputValidationError(f"replications must be at least 1, got {self.replications}")
        if self.threads < 1:
            raise InputValidationError(f"threads must be at least 1, got {self.threads}")
        if not c or any(not v > 0 for v in c):
            raise InputValidationError(f"ratios must be positive, got {c}")
        if not n_list or any(v < 1 for v in n_list):
            raise InputValidationError(f"sample sizes must be positive, got {n_list}")
        if not 0 < self.level < 1 or not 0 < self.alpha < 1:
            raise InputValidationError("level and alpha must lie in (0, 1)")
        if self.family is not None:
            if self.family not in MODEL_FAMILIES:
                raise InputValidationError(f"unknown model family '{self.family}'")
            if not self.x_values:
                raise InputValidationError(f"family '{self.family}' needs x values")
        elif self.x_values:
            raise InputValidationError("x values need a model family to vary over")
        elif self.psd is None:
            raise InputValidationError("an experiment needs a psd or a model family")
        for n in n_list:
            for ratio in c:
                dimension_for(n, ratio)

    def cells(self) -> List[Tuple[Optional[float], float, int]]:
        """(x, c, n) combinations in run order; x is None without a family"""
        xs: Sequence[Optional[float]] = self.x_values if self.family else (None,)
        return [(x, ratio, n) for x in xs for ratio in self.c for n in self.n_list]

    def psd_at(self, x: Optional[float]) -> DiscretePSD:
        if self.family is None:
            return self.psd
        return MODEL_FAMILIES[self.family](x)

    def order_at(self, x: Optional[float]) -> int:
        return self.order if self.order is not None else self.psd_at(x).order


@dataclass(frozen=True)
class ResultRow:
    """
    Aggregate over the replications of one cell

    rate holds the coverage probability (estimation) or the rejection rate
    (size_power); mc_se is its Monte Carlo standard error sqrt(q (1 - q) / R).
    """

    design: str
    parameter: str
    n: int
    c: float
    p: int
    replications: int
    failures: int = 0
    x: Optional[float] = None
    truth: Optional[float] = None
    mean: Optional[float] = None
    sd: Optional[float] = None
    rate: Optional[float] = None
    mc_se: Optional[float] = None
    infeasible: int = 0

    @property
    def failure_rate(self) -> float:
        return self.failures / self.replications

    def to_dict(self) -> Dict[str, Any]:
        return {
            'design': self.design,
            'parameter': self.parameter,
            'x': self.x,
            'n': self.n,
            'c': self.c,
            'p': self.p,
            'replications': self.replications,
            'failures': self.failures,
            'failure_rate': self.failure_rate,
            'infeasible': self.infeasible,
            'truth': self.truth,
            'mean': self.mean,
            'sd': self.sd,
            'rate': self.rate,
            'mc_se': self.mc_se,
        }


CSV_COLUMNS = ('design', 'parameter', 'x', 'n', 'c', 'p', 'replications', 'failures',
               'failure_rate', 'infeasible', 'truth', 'mean', 'sd', 'rate', 'mc_se')


@dataclass(frozen=True)
class ResultTable:
    """
    Rows of one or more experiments

    The rows are mirrored in a pandas DataFrame with CSV_COLUMNS as columns;
    selection and CSV output go through the frame.
    """

    rows: Tuple[ResultRow, ...]
    name: str = ''
    frame: pd.DataFrame = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        rows = tuple(self.rows)
        object.__setattr__(self, 'rows', rows)
        object.__setattr__(self, 'frame',
                           pd.DataFrame([row.to_dict() for row in rows], columns=list(CSV_COLUMNS)))

    def __iter__(self) -> Iterator[ResultRow]:
        return iter(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    def select(self, **criteria) -> List[ResultRow]:
        """Rows whose columns match every keyword (numbers compared within 1e-12)"""
        mask = np.ones(len(self.rows), dtype=bool)
        for key, value in criteria.items():
            if key not in self.frame.columns:
                raise KeyError(f"unknown result column '{key}'")
            column = self.frame[key]
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                numeric = pd.to_numeric(column, errors='coerce').to_numpy(dtype=float)
                mask &= np.abs(numeric - value) <= 1e-12
            else:
                mask &= (column == value).to_numpy(dtype=bool)
        return [row for row, keep in zip(self.rows, mask) if keep]

    def row(self, **criteria) -> ResultRow:
        found = self.select(**criteria)
        if len(found) != 1:
            raise KeyError(f"{len(found)} rows match {criteria}")
        return found[0]

    @classmethod
    def concat(cls, tables: Sequence["ResultTable"], name: str = '') -> "ResultTable":
        rows: List[ResultRow] = []
        for table in tables:
            rows.extend(table.rows)
        return cls(tuple(rows), name)

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'rows': [row.to_dict() for row in self.rows]}

    def to_csv(self, target: Union[str, Path, TextIO]) -> None:
        """Write the table as CSV with a header row; missing values are empty cells"""
        self.frame.to_csv(target, index=False, na_rep='')


def _rate_row(design: str, parameter: str, hits: int, successes: int, **fields) -> ResultRow:
    rate = hits / successes if successes else None
    mc_se = math.sqrt(rate * (1.0 - rate) / successes) if successes else None
    return ResultRow(design, parameter, rate=rate, mc_se=mc_se, **fields)


class ExperimentRunner:
    """Runs the replications of an ExperimentSpec on a thread pool"""

    def __init__(self, spec: ExperimentSpec, emit_data: Optional[Union[str, Path]] = None,
                 emit_count: int = 1):
        """
        Initialize runner

        Args:
            spec: Experiment design
            emit_data: Optional directory receiving raw sample matrices as CSV
            emit_count: Replications per cell written to emit_data
        """
        self.spec = spec
        self.emit_data = Path(emit_data) if emit_data is not None else None
        self.emit_count = emit_count
        if self.emit_data is not None:
            self.emit_data.mkdir(parents=True, exist_ok=True)

    def run(self) -> ResultTable:
        """Run every cell of the design"""
        if self.spec.design == ESTIMATION:
            rows = self._run_cells(self._estimation_cell)
        elif self.spec.design == SIZE_POWER:
            rows = self._run_cells(self._test_cell)
        else:
            rows = self._run_cells(self._density_cell)
        return ResultTable(tuple(rows), self.spec.name)

    def _run_cells(self, handler) -> List[ResultRow]:
        rows = []
        for cell, (x, c, n) in enumerate(self.spec.cells()):
            p = dimension_for(n, c)
            label = f"x={x:g}, " if x is not None else ''
            logger.info(f"Cell {cell}: {label}n={n}, c={c:g}, p={p}, "
                        f"{self.spec.replications} replications")
            rows.extend(handler(cell, x, c, n, p))
        return rows

    def _map(self, task: Callable[[int], Any], count: int) -> List[Any]:
        # results come back ordered by replication index whatever the thread count
        if self.spec.threads == 1:
            return [task(index) for index in range(count)]
        with ThreadPoolExecutor(max_workers=self.spec.threads) as pool:
            return list(pool.map(task, range(count)))

    def _draw(self, cell: int, index: int, n: int, shape: ShapeSpectrum):
        rng = replication_rng(self.spec.seed, index, cell)
        data = sample_elliptical(n, shape, self.spec.radius, rng)
        if self.emit_data is not None and index < self.emit_count:
            write_csv(data, self.emit_data / f"cell{cell:03d}_rep{index:05d}.csv")
        return data

    def _estimation_cell(self, cell, x, c, n, p) -> List[ResultRow]:
        psd = self.spec.psd_at(x)
        d = self.spec.order_at(x)
        if d != psd.order:
            raise ContractViolation(f"estimation needs order {psd.order} to compare with {psd}, got {d}")
        shape = ShapeSpectrum.from_psd(psd, p)
        truth = psd.full_theta

        def task(index):
            data = self._draw(cell, index, n, shape)
            try:
                estimate = estimate_psd(data, d, self.spec.level)
            except SscmError as exc:
                logger.warning(f"Replication {index} of cell {cell} failed: {exc}")
                return None
            hits = [interval.contains(value) for interval, value in zip(estimate.ci, truth)]
            return estimate.psd.full_theta, np.array(hits)

        results = self._map(task, self.spec.replications)
        ok = [result for result in results if result is not None]
        failures = len(results) - len(ok)
        names = psd.parameter_names(full=True)
        common = dict(n=n, c=c, p=p, replications=self.spec.replications, failures=failures, x=x)
        if not ok:
            return [ResultRow(ESTIMATION, name, truth=float(value), **common)
                    for name, value in zip(names, truth)]

        estimates = np.array([theta for theta, _ in ok])
        hits = np.array([h for _, h in ok])
        sd = estimates.std(axis=0, ddof=1) if len(ok) > 1 else np.zeros(len(names))
        rows = []
        for j, name in enumerate(names):
            row = _rate_row(ESTIMATION, name, int(hits[:, j].sum()), len(ok),
                            truth=float(truth[j]), mean=float(estimates[:, j].mean()),
                            sd=float(sd[j]), **common)
            rows.append(row)
        return rows

    def _test_cell(self, cell, x, c, n, p) -> List[ResultRow]:
        psd = self.spec.psd_at(x)
        d0 = self.spec.order if self.spec.order is not None else 1
        shape = ShapeSpectrum.from_psd(psd, p)

        def task(index):
            data = self._draw(cell, index, n, shape)
            try:
                report = run_test(data, d0, self.spec.alpha)
            except SscmError as exc:
                logger.warning(f"Replication {index} of cell {cell} failed: {exc}")
                return None
            return report.reject, report.infeasible, report.t_n

        results = self._map(task, self.spec.replications)
        ok = [result for result in results if result is not None]
        statistics = [t for _, _, t in ok if t is not None]
        return [_rate_row(
            SIZE_POWER, 'rejection', sum(1 for reject, _, _ in ok if reject), len(ok),
            n=n, c=c, p=p, replications=self.spec.replications, failures=len(results) - len(ok),
            x=x, infeasible=sum(1 for _, infeasible, _ in ok if infeasible),
            mean=float(np.mean(statistics)) if statistics else None,
            sd=float(np.std(statistics, ddof=1)) if len(statistics) > 1 else None,
        )]

    def _density_cell(self, cell, x, c, n, p) -> List[ResultRow]:
        psd = self.spec.psd_at(x)
        shape = ShapeSpectrum.from_psd(psd, p)
        b = sscm_from(self._draw(cell, 0, n, shape))
        ratio = b.ratio
        observed = esd_moments(b, DENSITY_ORDERS)
        limit = gamma_to_beta(theta_to_moments(psd, DENSITY_ORDERS), ratio)
        common = dict(n=n, c=c, p=p, replications=1, x=x)
        rows = [ResultRow(DENSITY, f"beta{j}", truth=limit.moment(j), mean=observed.moment(j), **common)
                for j in range(1, DENSITY_ORDERS + 1)]

        eigenvalues = b.eigenvalues()
        if p > n:
            eigenvalues = eigenvalues[p - n:]
        support = support_find(psd, ratio, SUPPORT_GRID)
        outside = float(np.mean(~support.contains(eigenvalues)))
        rows.append(ResultRow(DENSITY, 'outside_support', mean=outside,
                              truth=support.zero_atom_mass, **common))
        return rows


def run_estimation_experiment(spec: ExperimentSpec, **kwargs) -> ResultTable:
    """Mean, sd and interval coverage of estimate_psd per parameter and cell"""
    if spec.design != ESTIMATION:
        raise ContractViolation(f"expected an estimation design, got '{spec.design}'")
    return ExperimentRunner(spec, **kwargs).run()


def run_test_experiment(spec: ExperimentSpec, **kwargs) -> ResultTable:
    """Rejection rate of run_test per (x, c, n); x = 0 rows give the empirical size"""
    if spec.design != SIZE_POWER:
        raise ContractViolation(f"expected a size_power design, got '{spec.design}'")
    return ExperimentRunner(spec, **kwargs).run()


def run_density_experiment(spec: ExperimentSpec, **kwargs) -> ResultTable:
    """ESD moments against their limits, and eigenvalue mass outside the LSD support"""
    if spec.design != DENSITY:
        raise ContractViolation(f"expected a density design, got '{spec.design}'")
    return ExperimentRunner(spec, **kwargs).run()


def run_experiment(spec: ExperimentSpec, **kwargs) -> ResultTable:
    return ExperimentRunner(spec, **kwargs).run()


def _grid(step: float, count: int) -> Tuple[float, ...]:
    return tuple(round(step * i, 10) for i in range(count))


PRESETS: Dict[str, Dict[str, Any]] = {
    'table1': dict(design=ESTIMATION, psd=model1(), c=(2.0,), n_list=(100, 200, 400)),
    'table2': dict(design=ESTIMATION, psd=model2(), c=(0.25,), n_list=(400, 800, 1600)),
    'model3': dict(design=SIZE_POWER, family='model3', x_values=_grid(0.02, 10), order=1,
                   c=(0.5, 1.0, 2.0), n_list=(400,)),
    'model4': dict(design=SIZE_POWER, family='model4', x_values=_grid(0.05, 10), order=2,
                   c=(0.5, 1.0, 2.0), n_list=(400,)),
    'density1': dict(design=DENSITY, psd=model1(), c=(2.0,), n_list=(400,), replications=1),
    'density2': dict(design=DENSITY, psd=model2(), c=(0.25,), n_list=(1600,), replications=1),
}

PRESET_GROUPS: Dict[str, Tuple[str, ...]] = {
    'table3': ('model3', 'model4'),
}


def preset_names() -> List[str]:
    return sorted(set(PRESETS) | set(PRESET_GROUPS))


def preset_specs(name: str, **overrides) -> List[ExperimentSpec]:
    """
    Experiment specs of a named preset

    Args:
        name: One of preset_names()
        **overrides: ExperimentSpec fields replacing the preset values (None values ignored)

    Returns:
        List of specs (several for grouped presets such as 'table3')
    """
    members = PRESET_GROUPS.get(name, (name,))
    overrides = {key: value for key, value in overrides.items() if value is not None}
    specs = []
    for member in members:
        if member not in PRESETS:
            raise InputValidationError(f"unknown model preset '{name}', expected one of {preset_names()}")
        spec = ExperimentSpec(name=member, **PRESETS[member])
        specs.append(replace(spec, **overrides) if overrides else spec)
    return specs
