"""
Command-line entry point for sscm_spectra
"""
import argparse
import json
import logging
import sys
from contextlib import contextmanager
from typing import Any, Dict, Iterator, List, Optional, Sequence, TextIO

import numpy as np
import pandas as pd

from .config import ConfigManager
from .estimation import estimate_psd
from .exceptions import InputValidationError, SscmError
from .harness import ExperimentSpec, ResultTable, preset_names, preset_specs, run_experiment
from .moments import beta_to_gamma, esd_moments
from .mp_law import density_eval, support_find
from .order_test import run_test
from .psd import DiscretePSD
from .sampling import RadiusLaw, load_csv, sscm_from

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2


class UsageError(Exception):
    """Bad command line"""


class CliArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting with status 2"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _build_parser() -> CliArgumentParser:
    common = CliArgumentParser(add_help=False)
    common.add_argument('--out', type=str, help='Output file (default: stdout)')
    common.add_argument('--config', type=str, help='JSON configuration file')
    common.add_argument('--log-level', type=str, help='Logging level (default from config: INFO)')

    parser = CliArgumentParser(
        prog='sscm-spectra',
        description='Spectral inference for high-dimensional spatial-sign covariance matrices'
    )
    commands = parser.add_subparsers(dest='command', parser_class=CliArgumentParser)
    commands.required = True

    simulate = commands.add_parser('simulate', parents=[common],
                                   help='Run a Monte Carlo experiment and write a CSV table')
    simulate.add_argument('--model', type=str, help=f"Preset: {', '.join(preset_names())}")
    simulate.add_argument('--n', type=int, nargs='+', help='Sample sizes')
    simulate.add_argument('--c', type=float, nargs='+', help='Dimension to sample size ratios')
    simulate.add_argument('--reps', type=int, help='Replications per cell')
    simulate.add_argument('--seed', type=int, help='Experiment seed')
    simulate.add_argument('--threads', type=int, help='Worker threads')
    simulate.add_argument('--radius', type=str, help='Radius law: constant, chi, lognormal:mu:sigma, pareto:alpha')
    simulate.add_argument('--level', type=float, help='Confidence level of the intervals')
    simulate.add_argument('--alpha', type=float, help='Significance level of the order test')
    simulate.add_argument('--order', type=int, help='PSD order (estimation) or d0 (order test)')
    simulate.add_argument('--emit-data', type=str, help='Directory receiving raw sample matrices as CSV')
    simulate.add_argument('--emit-count', type=int, default=1, help='Replications per cell to emit (default: 1)')

    estimate = commands.add_parser('estimate', parents=[common],
                                   help='Estimate a discrete PSD from a data CSV (JSON output)')
    estimate.add_argument('--data', type=str, required=True, help='n x p data CSV')
    estimate.add_argument('--order', type=int, required=True, help='Number of atoms d')
    estimate.add_argument('--level', type=float, help='Confidence level')

    test = commands.add_parser('test', parents=[common],
                               help='Test H0: d <= d0 on a data CSV (JSON output)')
    test.add_argument('--data', type=str, required=True, help='n x p data CSV')
    test.add_argument('--d0', type=int, required=True, help='Hypothesized order')
    test.add_argument('--alpha', type=float, help='Significance level')

    moments = commands.add_parser('moments', parents=[common],
                                  help='ESD and population moment estimates of a data CSV (CSV output)')
    moments.add_argument('--data', type=str, required=True, help='n x p data CSV')
    moments.add_argument('--order', type=int, default=4, help='Highest moment order (default: 4)')

    density = commands.add_parser('density', parents=[common],
                                  help='Limiting spectral density on a grid (CSV output)')
    density.add_argument('--psd', type=str, required=True, help="Atoms and weights, e.g. '0.5:0.5,1.5:0.5'")
    density.add_argument('--c', type=float, required=True, help='Dimension to sample size ratio')
    density.add_argument('--grid', type=str, required=True, help='lo:hi:count')
    density.add_argument('--eps', type=float, help='Imaginary offset (default from config: 1e-6)')
    return parser


def _configure_logging(level_name: str) -> None:
    level = getattr(logging, str(level_name).upper(), None)
    if not isinstance(level, int):
        raise InputValidationError(f"unknown log level '{level_name}'")
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)
    logging.getLogger().setLevel(level)


@contextmanager
def _output(path: Optional[str]) -> Iterator[TextIO]:
    if path:
        with open(path, 'w', newline='', encoding='utf-8') as f:
            yield f
    else:
        yield sys.stdout


def _pick(flag: Any, config: ConfigManager, key: str, default: Any = None) -> Any:
    return flag if flag is not None else config.get(key, default)


def _simulation_specs(args, config: ConfigManager) -> List[ExperimentSpec]:
    radius = _pick(args.radius, config, 'simulation.radius', 'chi')
    overrides: Dict[str, Any] = {
        'n_list': _pick(args.n, config, 'simulation.n_list'),
        'c': _pick(args.c, config, 'simulation.c'),
        'replications': _pick(args.reps, config, 'simulation.replications'),
        'seed': _pick(args.seed, config, 'simulation.seed'),
        'threads': _pick(args.threads, config, 'simulation.threads'),
        'radius': radius if isinstance(radius, RadiusLaw) else RadiusLaw.parse(radius),
        'level': _pick(args.level, config, 'simulation.level'),
        'alpha': _pick(args.alpha, config, 'simulation.alpha'),
        'order': _pick(args.order, config, 'simulation.order'),
    }
    model = _pick(args.model, config, 'simulation.model')
    if model:
        return preset_specs(model, **overrides)

    psd_text = config.get('simulation.psd')
    family = config.get('simulation.family')
    design = config.get('simulation.design')
    if not (design and (psd_text or family)):
        raise UsageError("simulate needs --model or a config with 'design' and either 'psd' or 'family'")
    fields = {key: value for key, value in overrides.items() if value is not None}
    if psd_text:
        fields['psd'] = DiscretePSD.parse(psd_text)
    if family:
        fields['family'] = family
    x_values = config.get('simulation.x_values')
    if x_values:
        fields['x_values'] = tuple(x_values)
    return [ExperimentSpec(design=design, name=config.get('simulation.name', 'custom'), **fields)]


def _cmd_simulate(args, config: ConfigManager) -> None:
    tables = []
    for spec in _simulation_specs(args, config):
        logger.info(f"Running {spec.name or spec.design}: {spec.replications} replications, "
                    f"seed {spec.seed}, {spec.threads} thread(s)")
        tables.append(run_experiment(spec, emit_data=args.emit_data, emit_count=args.emit_count))
    table = ResultTable.concat(tables, name=args.model or 'custom')
    with _output(args.out) as out:
        table.to_csv(out)


def _write_json(payload: Dict[str, Any], path: Optional[str]) -> None:
    with _output(path) as out:
        json.dump(payload, out, indent=2)
        out.write('\n')


def _cmd_estimate(args, config: ConfigManager) -> None:
    level = _pick(args.level, config, 'simulation.level', 0.95)
    estimate = estimate_psd(load_csv(args.data), args.order, level)
    _write_json(estimate.to_dict(), args.out)


def _cmd_test(args, config: ConfigManager) -> None:
    alpha = _pick(args.alpha, config, 'simulation.alpha', 0.05)
    report = run_test(load_csv(args.data), args.d0, alpha)
    _write_json(report.to_dict(), args.out)


def _cmd_moments(args, config: ConfigManager) -> None:
    if args.order < 1:
        raise InputValidationError(f"moment order must be at least 1, got {args.order}")
    b = sscm_from(load_csv(args.data))
    beta = esd_moments(b, args.order)
    gamma = beta_to_gamma(beta, b.ratio)
    table = pd.DataFrame({'order': np.arange(1, args.order + 1), 'beta': beta.values, 'gamma': gamma.values})
    with _output(args.out) as out:
        table.to_csv(out, index=False)


def _parse_grid(text: str) -> np.ndarray:
    try:
        lo, hi, count = text.split(':')
        lo, hi, count = float(lo), float(hi), int(count)
    except ValueError:
        raise UsageError(f"--grid expects lo:hi:count, got '{text}'")
    if count < 1 or not hi >= lo:
        raise UsageError(f"--grid needs count >= 1 and hi >= lo, got '{text}'")
    return np.linspace(lo, hi, count)


def _cmd_density(args, config: ConfigManager) -> None:
    psd = DiscretePSD.parse(args.psd)
    grid = _parse_grid(args.grid)
    eps = _pick(args.eps, config, 'solver.density_eps', 1e-6)
    if args.c > 0:
        support = support_find(psd, args.c, int(config.get('solver.support_grid', 4096)))
        logger.info(f"Support of the limiting law: {list(support.intervals)}, "
                    f"mass at zero {support.zero_atom_mass:.6g}")
    curve = density_eval(grid, psd, args.c, eps=eps,
                         tol=float(config.get('solver.tol', 1e-13)),
                         max_iter=int(config.get('solver.max_iter', 10000)))
    with _output(args.out) as out:
        pd.DataFrame({'x': curve.x, 'density': curve.density}).to_csv(out, index=False, na_rep='nan')


COMMANDS = {
    'simulate': _cmd_simulate,
    'estimate': _cmd_estimate,
    'test': _cmd_test,
    'moments': _cmd_moments,
    'density': _cmd_density,
}


def cli_dispatch(argv: Sequence[str]) -> int:
    """
    Parse argv, run the subcommand and return the exit status

    Args:
        argv: Arguments without the program name

    Returns:
        0 on success, 1 on usage or input errors, 2 on numerical failures
    """
    parser = _build_parser()
    try:
        args = parser.parse_args(list(argv))
    except UsageError as e:
        print(f"sscm-spectra: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        return int(e.code or 0)

    try:
        config = ConfigManager(config_file=args.config)
        _configure_logging(args.log_level or config.get('logging.level', 'INFO'))
        COMMANDS[args.command](args, config)
    except UsageError as e:
        logger.error(f"Usage error: {e}")
        return EXIT_USAGE
    except InputValidationError as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_USAGE
    except SscmError as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
    except OSError as e:
        logger.error(f"Error: {e}")
        return EXIT_USAGE
    return EXIT_OK


def main():
    """Main entry point"""
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == '__main__':
    main()
