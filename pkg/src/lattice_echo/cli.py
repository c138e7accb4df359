"""Command line entry point: simulate, scan, recover, verify-lemmas, sweep."""
import argparse
import json
import logging
import re
import sys

import pandas as pd

from lattice_echo.config import RunConfig, config_help, read_config
from lattice_echo.diagnostics import verify_lemmas
from lattice_echo.estimator import RegularGrid, exp_sum_grid, radius_sweep
from lattice_echo.exceptions import LatticeEchoError, NumericalFailure
from lattice_echo.recovery import RecoveryParams, recover_lattice
from lattice_echo.sampler import realize
from lattice_echo.utils import resolve_workers, write_csv


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

BOX_VALUE = re.compile(r'^-[\d.]')


def _box(text):
    try:
        low, high = (float(x) for x in text.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'low,high', got {text!r}")
    if low >= high:
        raise argparse.ArgumentTypeError(f"empty box {text!r}")
    return [low, high]


class CommandParser(argparse.ArgumentParser):
    """Reads `--box -a,b` like `--box=-a,b`; argparse would take `-a,b` for a flag."""

    def parse_known_args(self, args=None, namespace=None):
        args = list(sys.argv[1:] if args is None else args)
        joined = []
        for token in args:
            if joined and joined[-1] == '--box' and BOX_VALUE.match(token):
                joined[-1] = f"--box={token}"
            else:
                joined.append(token)
        return super().parse_known_args(joined, namespace)


def build_parser():
    parser = CommandParser(
            prog='lattice-echo',
            description='Simulate perturbed lattices and recover the lattice from one realization',
            epilog='Configuration keys and defaults:\n' + config_help(),
            formatter_class=argparse.RawDescriptionHelpFormatter)

    # Global settings
    parser.add_argument(
            '--verbose', '-v', action='count', default=0,
            help='-v for progress, -vv for debug output')

    subparsers = parser.add_subparsers(dest='command', required=True)
    commands = {
        'simulate': 'write one realization as CSV',
        'scan': 'evaluate M_R on a frequency grid and write it as CSV',
        'recover': 'recover lattice, offset and dispersion, write a JSON report',
        'verify-lemmas': 'run the diagnostic suites, write a JSON report',
        'sweep': 'evaluate M_R over the configured radii and frequencies',
    }
    for name, help_text in commands.items():
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument(
                '--config', '-c', type=str,
                help='configuration file (defaults apply without one)')
        sub.add_argument(
                '--out', '-o', type=str,
                help='output file (default from output.<command> in the config)')
        sub.add_argument(
                '--seed', type=int,
                help='realization seed, overrides the config')
        sub.add_argument(
                '--workers', type=int,
                help='number of worker threads (default LATTICE_ECHO_WORKERS or all cores)')

        if name in ('scan', 'recover', 'sweep'):
            sub.add_argument(
                    '--radius', type=float,
                    help='scan radius, or R_verify for recover')
        if name in ('scan', 'recover', 'simulate'):
            sub.add_argument(
                    '--box', type=_box,
                    help='box per axis as low,high (frequencies; positions for simulate)')
        if name in ('scan', 'recover'):
            sub.add_argument(
                    '--spacing', type=float,
                    help='grid spacing (default 1/(3R))')
        if name == 'recover':
            sub.add_argument(
                    '--beta', type=float,
                    help='verification threshold')

    return parser


def _output(args, cfg, command):
    path = args.out or getattr(cfg, f"output_{command.replace('-', '_')}")
    if path is None:
        raise ValueError(f"No output path: pass --out or set output.{command} in the config.")
    return path


def _realization(cfg, *radii):
    lattice = cfg.build_lattice()
    noise = cfg.build_noise(lattice)
    return realize(lattice, noise, cfg.build_offset(), cfg.seed, cfg.generation_radius(*radii))


def run_simulate(args, cfg, workers):
    radius = cfg.generation_radius(cfg.radius_scan)
    realization = _realization(cfg, radius)
    frame = realization.to_frame()
    if args.box is not None:
        frame = frame[realization.box_mask(*args.box)]
    write_csv(frame, _output(args, cfg, 'simulate'))


def run_scan(args, cfg, workers):
    radius = args.radius if args.radius is not None else cfg.radius_scan
    low, high = args.box if args.box is not None else cfg.grid_box
    spacing = args.spacing or cfg.grid_spacing or 1/(3*radius)

    realization = _realization(cfg, radius)
    grid = RegularGrid.from_box(low, high, spacing, realization.dim)
    field = exp_sum_grid(realization, radius, grid, workers=workers)
    write_csv(field.to_frame(), _output(args, cfg, 'scan'))


def run_recover(args, cfg, workers):
    params = RecoveryParams(
        r_detect=cfg.radius_detect,
        r_verify=args.radius if args.radius is not None else cfg.radius_verify,
        box=tuple(args.box if args.box is not None else cfg.grid_box),
        spacing=args.spacing or cfg.grid_spacing,
        beta_detect=cfg.beta_detect,
        beta=args.beta if args.beta is not None else cfg.beta,
        workers=workers)

    realization = _realization(cfg, params.r_detect, params.r_verify)
    report = recover_lattice(realization, params)
    if args.verbose:
        report.summary()

    with open(_output(args, cfg, 'recover'), 'w', encoding='utf-8', newline='\n') as file:
        file.write(report.to_json() + '\n')


def run_verify(args, cfg, workers):
    report = verify_lemmas(cfg)
    with open(_output(args, cfg, 'verify'), 'w', encoding='utf-8', newline='\n') as file:
        file.write(json.dumps(report, indent=2) + '\n')


def run_sweep(args, cfg, workers):
    radii = [args.radius] if args.radius is not None else cfg.sweep_radii
    realization = _realization(cfg, *radii)

    rows = []
    for lam in cfg.sweep_lambdas:
        for radius, value in radius_sweep(realization, radii, lam):
            rows.append([radius] + list(lam) + [value.real, value.imag])

    columns = ['radius'] + [f"lambda_{i+1}" for i in range(realization.dim)] + ['re', 'im']
    write_csv(pd.DataFrame(rows, columns=columns), _output(args, cfg, 'sweep'))


COMMANDS = {
    'simulate': run_simulate,
    'scan': run_scan,
    'recover': run_recover,
    'verify-lemmas': run_verify,
    'sweep': run_sweep,
}


def main(argv=None):
    args = build_parser().parse_args(argv)

    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format='%(asctime)s %(name)s %(levelname)s: %(message)s')

    try:
        cfg = read_config(args.config) if args.config else RunConfig().validate()
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.validate()
        workers = resolve_workers(args.workers if args.workers is not None else cfg.workers)

        COMMANDS[args.command](args, cfg, workers)

    except NumericalFailure as error:
        logger.error("%s: %s", type(error).__name__, error)
        return EXIT_NUMERICAL
    except (LatticeEchoError, ValueError, OSError) as error:
        logger.error("%s: %s", type(error).__name__, error)
        return EXIT_INVALID

    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
