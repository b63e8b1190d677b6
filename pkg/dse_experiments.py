'''
This script runs Monte Carlo experiments of the diffusion state estimators
on a bus network and exports their averaged learning curves.

Subcommands:
    run      one experiment document, one algorithm
    compare  the same document under several algorithms, one CSV
    preset   print or summarize a bundled topology
    plot     render a comparison CSV to PNG
'''
import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import pandas as pd

from utils.harness import (
    ConfigError, compare_command, default_output, export_csv, load_config, run_experiment, with_algorithm
)
from utils.settings.config import ALGORITHMS, GAP_BUS
from utils.tools import font_colors, set_verbosity
from utils.topology import available_presets, load_preset, preset_text, topology_summary


def apply_overrides(cfg, args):
    '''
    Command-line flags take precedence over the experiment document.
    '''
    overrides = {
        name: getattr(args, name)
        for name in ('seed', 'runs', 'iterations', 'num_workers')
        if getattr(args, name, None) is not None
    }
    if getattr(args, 'out', None) is not None:
        overrides['output'] = args.out

    return replace(cfg, **overrides) if overrides else cfg


def run(args):
    cfg = apply_overrides(load_config(args.config), args)
    bundle = run_experiment(cfg, progress=not args.quiet)

    out = Path(cfg.output) if cfg.output is not None else default_output(cfg.algorithm)
    export_csv(bundle, out)
    print(f'{font_colors.GREEN}{cfg.algorithm}: final MSE {bundle.trace.mse_db[-1]:.2f} dB, '
          f'results in {out}{font_colors.ENDC}')


def compare(args):
    cfg = apply_overrides(load_config(args.config), args)

    algorithms = [a.strip() for a in args.algorithms.split(',') if a.strip()]
    cfgs = [with_algorithm(cfg, algorithm) for algorithm in algorithms]

    out = Path(cfg.output) if cfg.output is not None else default_output('compare')
    csv_path, script_path, _ = compare_command(cfgs, out, gap_bus=args.bus, progress=not args.quiet)
    print(f'{font_colors.GREEN}Comparison in {csv_path}, plot with "python {script_path.name}" '
          f'from {script_path.parent}{font_colors.ENDC}')


def preset(args):
    if args.summary:
        print(json.dumps(topology_summary(load_preset(args.name)), indent=2))
    else:
        # Default action is printing the document itself
        print(preset_text(args.name), end='')


def plot(args):
    import matplotlib
    matplotlib.use('Agg')
    from utils.plotting import plot_comparison

    csv_path = Path(args.csv)
    if not csv_path.is_file():
        raise ConfigError(f'comparison file "{csv_path}" does not exist')

    out = Path(args.out) if args.out is not None else csv_path.with_suffix('.png')
    try:
        plot_comparison(pd.read_csv(csv_path), out)
    except ValueError as e:
        raise ConfigError(f'{csv_path}: {e}') from None
    print(f'{font_colors.GREEN}Figure saved in {out}{font_colors.ENDC}')


def add_run_arguments(parser):
    parser.add_argument('--config', type=str, required=True,
                        help='The experiment document (TOML).')
    parser.add_argument('--seed', type=int, default=None, required=False,
                        help='Master seed. Overrides the document.')
    parser.add_argument('--out', type=str, default=None, required=False,
                        help='The CSV file to write. Default logs/<algorithm>/run_<timestamp>.csv')
    parser.add_argument('--runs', type=int, default=None, required=False,
                        help='Number of Monte Carlo runs. Overrides the document.')
    parser.add_argument('--iterations', type=int, default=None, required=False,
                        help='Iterations per run. Overrides the document.')
    parser.add_argument('--num_workers', type=int, default=None, required=False,
                        help='Number of processes to spread the runs over. Overrides the document.')


def build_parser():
    parser = argparse.ArgumentParser(description='Diffusion-based distributed state estimation experiments.')
    parser.add_argument('--verbose', action='store_true', default=False, required=False,
                        help='Log debug messages.')
    parser.add_argument('--quiet', action='store_true', default=False, required=False,
                        help='Log warnings and errors only, hide progress bars.')

    subparsers = parser.add_subparsers(dest='command', required=True)

    run_parser = subparsers.add_parser('run', help='Run one experiment and export its averaged trace.')
    add_run_arguments(run_parser)
    run_parser.set_defaults(func=run)

    compare_parser = subparsers.add_parser('compare', help='Run one experiment under several algorithms.')
    add_run_arguments(compare_parser)
    compare_parser.add_argument('--algorithms', type=str, default=','.join(ALGORITHMS), required=False,
                                help=f'Comma separated algorithm tags. Default "{",".join(ALGORITHMS)}"')
    compare_parser.add_argument('--bus', type=int, default=None, required=False,
                                help=f'Bus whose phase angle gap is exported. Default: the first of '
                                     f'gap_buses, {GAP_BUS} for the 14-bus preset')
    compare_parser.set_defaults(func=compare)

    preset_parser = subparsers.add_parser('preset', help='Show a bundled topology.')
    preset_parser.add_argument('name', type=str, choices=available_presets(),
                               help='The preset name.')
    preset_parser.add_argument('--print', action='store_true', default=False, required=False,
                               help='Print the topology document (default action).')
    preset_parser.add_argument('--summary', action='store_true', default=False, required=False,
                               help='Print degrees, components and area adjacency instead.')
    preset_parser.set_defaults(func=preset)

    plot_parser = subparsers.add_parser('plot', help='Render a comparison CSV.')
    plot_parser.add_argument('--csv', type=str, required=True,
                             help='The comparison CSV written by "compare".')
    plot_parser.add_argument('--out', type=str, default=None, required=False,
                             help='The PNG to write. Default: next to the CSV.')
    plot_parser.set_defaults(func=plot)

    return parser


def main(argv=None):
    # Parse user arguments
    args = build_parser().parse_args(argv)
    set_verbosity(args.verbose, args.quiet)

    try:
        args.func(args)
    except (ValueError, OSError) as e:
        print(f'{font_colors.RED}Error: {e}{font_colors.ENDC}', file=sys.stderr)
        return 1

    return 0


if __name__ == '__main__':
    sys.exit(main())
