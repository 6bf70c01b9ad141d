"""
.. module:: cli
    :synopsis: Command line front-end

    fpsim run --config example/blobs.yaml --set attack.kind=dfa_r
    fpsim sweep --config example/blobs.yaml --axis defense.kind=[mkrum,median]
    fpsim report runs/*
    fpsim partition-inspect --config example/blobs.yaml --beta 0.1

Exit codes: 0 success, 1 failed sweep cell or invalid report row,
2 invalid configuration, 3 numerical failure during a run.
"""
import argparse
import csv
import itertools
import os
import sys
from dataclasses import asdict, dataclass

import numpy as np
import yaml

from . import __version__
from .configuration import load_config, parse_override
from .constants import SELECTION_DEFENSES
from .data import (class_histograms, load_dataset, mean_client_entropy,
                   partition_dataset)
from .errors import (ConfigurationError, FpsimError, IdxParseError,
                     NumericalFailureError)
from .federation import run_experiment
from .logger import add_file_handler, create_logger, get_logger
from .metrics import (aggregate_summaries, overhead_estimate, read_rounds_csv,
                      read_summary, summary_from_csv, write_summary)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

MANIFEST = 'manifest.yaml'
SUMMARY = 'summary.yaml'
ROUNDS = 'rounds.csv'

SWEEP_HEADER = ['cell', 'dataset', 'defense', 'attack', 'seed', 'acc',
                'acc_m', 'asr_pct', 'dpr_pct', 'run_dir', 'status']


@dataclass
class RunManifest:
    config_path: str
    config: dict
    run_dir: str
    seed: int
    version: str
    config_hash: str

    def write(self):
        path = os.path.join(self.run_dir, MANIFEST)
        with open(path, 'w') as stream:
            yaml.safe_dump(asdict(self), stream, default_flow_style=False,
                           sort_keys=True)
        return path


def _format_pct(value):
    return 'N/A' if value is None else '%.2f' % value


def run_directory(out_root, config):
    """One directory per (configuration hash, seed)"""
    return os.path.join(out_root, '%s-%s-s%d' % (
        config.experiment.name, config.config_hash()[:12],
        config.experiment.seed))


def execute(config, config_path, out_root, logger=None, workers=None):
    """
    Run one resolved configuration into its run directory

    Returns
    -------
    code : int
    run_dir : str
    summary : Summary or None
    """
    log = get_logger(logger)
    run_dir = run_directory(out_root, config)
    os.makedirs(run_dir, exist_ok=True)
    RunManifest(config_path or '', config.to_dict(), run_dir,
                config.experiment.seed, __version__,
                config.config_hash()).write()
    handler = add_file_handler(log, os.path.join(run_dir, 'run.log'))
    try:
        log.info("run directory %s" % run_dir)
        _, summary = run_experiment(config, logger=log, run_dir=run_dir,
                                    workers=workers)
        summary.csv_path = ROUNDS
        write_summary(summary, os.path.join(run_dir, SUMMARY))
        log.info("summary written to %s" % os.path.join(run_dir, SUMMARY))
        return EXIT_OK, run_dir, summary
    except NumericalFailureError as error:
        log.error("numerical failure: %s" % error)
        return EXIT_NUMERICAL, run_dir, None
    except (ConfigurationError, IdxParseError, OSError) as error:
        log.error(str(error))
        return EXIT_CONFIG, run_dir, None
    finally:
        log.removeHandler(handler)
        handler.close()


def _overrides(overrides, seed):
    overrides = list(overrides or [])
    if seed is not None:
        overrides.append((('experiment', 'seed'), seed))
    return overrides


def cmd_run(config_path, overrides=(), seed=None, out_root='runs',
            logger=None, workers=None):
    log = get_logger(logger)
    try:
        config = load_config(config_path, _overrides(overrides, seed))
    except ConfigurationError as error:
        log.error(str(error))
        return EXIT_CONFIG
    code, _, _ = execute(config, config_path, out_root, log, workers)
    return code


def parse_axis(text):
    """``section.key=[v1, v2]`` into ((section, key), [v1, v2])"""
    key, values = parse_override(text)
    if not isinstance(values, list):
        values = [values]
    if not values:
        raise ConfigurationError("an axis needs at least one value",
                                 '.'.join(key))
    return key, values


def cmd_sweep(config_path, axes, overrides=(), seed=None, out_root='runs',
              logger=None, workers=None, stream=None):
    """
    Run the Cartesian product of the axes, one run directory per cell, and
    collect one row per cell in ``sweep.csv``
    """
    log = get_logger(logger)
    stream = stream or sys.stdout
    try:
        parsed = [parse_axis(axis) for axis in axes]
    except ConfigurationError as error:
        log.error(str(error))
        return EXIT_CONFIG
    keys = [key for key, _ in parsed]
    os.makedirs(out_root, exist_ok=True)
    rows = []
    for cell, values in enumerate(itertools.product(
            *[values for _, values in parsed])):
        cell_overrides = _overrides(overrides, seed) + list(zip(keys,
                                                                values))
        row = dict.fromkeys(SWEEP_HEADER, '')
        row['cell'] = cell
        for key, value in zip(keys, values):
            row['.'.join(key)] = value
        try:
            config = load_config(config_path, cell_overrides)
        except ConfigurationError as error:
            log.error("cell %d: %s" % (cell, error))
            row['status'] = 'invalid: %s' % error
            rows.append(row)
            continue
        row.update(dataset=config.dataset.name, defense=config.defense.kind,
                   attack=config.attack.kind, seed=config.experiment.seed)
        try:
            code, run_dir, summary = execute(config, config_path, out_root,
                                             log, workers)
        except FpsimError as error:
            log.error("cell %d failed: %s" % (cell, error))
            code, run_dir, summary = EXIT_FAILED, '', None
        row['run_dir'] = run_dir
        if summary is None:
            row['status'] = 'failed (exit %d)' % code
        else:
            row.update(acc='%.6f' % summary.acc,
                       acc_m='%.6f' % summary.acc_m,
                       asr_pct=_format_pct(summary.asr_pct),
                       dpr_pct=_format_pct(summary.dpr_pct), status='ok')
        rows.append(row)

    header = SWEEP_HEADER[:1] + ['.'.join(key) for key in keys] + \
        SWEEP_HEADER[1:]
    path = os.path.join(out_root, 'sweep.csv')
    with open(path, 'w', newline='') as handle:
        writer = csv.DictWriter(handle, header, lineterminator='\n')
        writer.writeheader()
        writer.writerows(rows)
    _print_table(header, [[str(row[name]) for name in header]
                          for row in rows], stream)
    log.info("sweep table written to %s" % path)
    failed = [row for row in rows if row['status'] != 'ok']
    return EXIT_FAILED if failed else EXIT_OK


def _print_table(header, rows, stream):
    widths = [max([len(name)] + [len(row[index]) for row in rows])
              for index, name in enumerate(header)]
    line = '  '.join('%-*s' % (width, name)
                     for width, name in zip(widths, header))
    print(line, file=stream)
    print('-' * len(line), file=stream)
    for row in rows:
        print('  '.join('%-*s' % (width, cell)
                        for width, cell in zip(widths, row)), file=stream)


def _report_row(run_dir, series_dir):
    """One row of the report, and the summary behind it"""
    summary = read_summary(os.path.join(run_dir, SUMMARY))
    with open(os.path.join(run_dir, MANIFEST)) as stream:
        manifest = yaml.safe_load(stream)
    config = manifest['config']
    recomputed = summary_from_csv(summary.csv_path, summary.acc,
                                  summary.defense)
    if recomputed.asr_pct != summary.asr_pct or \
            recomputed.dpr_pct != summary.dpr_pct or \
            recomputed.acc_m != summary.acc_m:
        raise ConfigurationError("summary disagrees with %s" %
                                 summary.csv_path, 'report')

    records = read_rounds_csv(summary.csv_path)
    name = os.path.basename(os.path.normpath(run_dir))
    with open(os.path.join(series_dir, 'series_%s.csv' % name), 'w',
              newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(['round', 'accuracy'])
        for record in records:
            writer.writerow([record.round, '%.6f' % record.accuracy])

    overhead = ''
    if summary.defense == 'refd' and summary.inference_ms > 0:
        measured = np.mean([record.defense_ms for record in records])
        predicted = overhead_estimate(config['dataset']['reference_size'],
                                      config['experiment']['per_round'],
                                      summary.inference_ms)
        overhead = '%.1f / %.1f ms' % (measured, predicted)
    return [name, config['dataset']['name'], summary.defense,
            config['attack']['kind'], '%.4f' % summary.acc,
            '%.4f' % summary.acc_m, _format_pct(summary.asr_pct),
            _format_pct(summary.dpr_pct), overhead], summary


def cmd_report(run_dirs, series_dir='.', logger=None, stream=None):
    """
    Print the acc / acc_m / ASR / DPR table of the given runs, write one
    accuracy-per-round series per run and, for runs sharing a
    configuration, the mean over their seeds
    """
    log = get_logger(logger)
    stream = stream or sys.stdout
    os.makedirs(series_dir, exist_ok=True)
    header = ['run', 'dataset', 'defense', 'attack', 'acc', 'acc_m', 'ASR',
              'DPR', 'RefD measured / predicted']
    rows = []
    groups = {}
    invalid = 0
    for run_dir in run_dirs:
        try:
            row, summary = _report_row(run_dir, series_dir)
        except (FpsimError, OSError, KeyError, TypeError,
                yaml.YAMLError) as error:
            log.error("%s: %s" % (run_dir, error))
            invalid += 1
            rows.append([os.path.basename(os.path.normpath(run_dir))] +
                        ['invalid'] + [''] * (len(header) - 2))
            continue
        rows.append(row)
        groups.setdefault(summary.config_hash, []).append((row, summary))

    for members in groups.values():
        if len(members) < 2:
            continue
        mean = aggregate_summaries([summary for _, summary in members])
        first = members[0][0]
        rows.append(['mean of %d runs' % mean['runs']] + first[1:4] + [
            '%.4f' % mean['acc'], '%.4f' % mean['acc_m'],
            _format_pct(mean['asr_pct']),
            'N/A' if first[2] not in SELECTION_DEFENSES else
            _format_pct(mean['dpr_pct']), ''])
    _print_table(header, rows, stream)
    return EXIT_FAILED if invalid else EXIT_OK


def cmd_partition_inspect(config_path, overrides=(), seed=None, beta=None,
                          logger=None, stream=None):
    """Print the class histogram of every client and the mean entropy"""
    log = get_logger(logger)
    stream = stream or sys.stdout
    overrides = _overrides(overrides, seed)
    if beta is not None:
        overrides.append((('dataset', 'beta'), beta))
    try:
        config = load_config(config_path, overrides)
        dataset = load_dataset(config.dataset, config.experiment.seed, log)
    except (ConfigurationError, IdxParseError, OSError) as error:
        log.error(str(error))
        return EXIT_CONFIG
    partition = partition_dataset(dataset, config.experiment.clients,
                                  config.dataset.beta,
                                  config.experiment.seed)
    histograms = class_histograms(dataset, partition)
    header = ['client', 'n'] + ['c%d' % label
                                for label in range(dataset.num_classes)]
    _print_table(header, [[str(client), str(counts.sum())] +
                          [str(count) for count in counts]
                          for client, counts in enumerate(histograms)],
                 stream)
    print('beta %s, mean client entropy %.4f nats' % (
        config.dataset.beta, mean_client_entropy(histograms)), file=stream)
    return EXIT_OK


def _beta(text):
    return text if text == 'iid' else float(text)


def build_parser():
    parser = argparse.ArgumentParser(
        prog='fpsim',
        description="Federated poisoning simulator: data-free attacks"
                    " against robust aggregation")
    parser.add_argument('--version', action='version', version=__version__)
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true',
                           help="log per-client detail")
    verbosity.add_argument('-q', '--quiet', action='store_true',
                           help="log warnings and errors only")
    commands = parser.add_subparsers(dest='command')
    commands.required = True

    def with_config(sub):
        sub.add_argument('--config', help="YAML experiment file")
        sub.add_argument('--set', dest='overrides', action='append',
                         default=[], metavar='SECTION.KEY=VALUE',
                         help="override one key, may be repeated")
        sub.add_argument('--seed', type=int, help="master seed")

    run = commands.add_parser('run', help="run one experiment")
    with_config(run)
    run.add_argument('--out', default='runs', help="root of the run"
                     " directories")

    sweep = commands.add_parser('sweep', help="run a grid of experiments")
    with_config(sweep)
    sweep.add_argument('--axis', action='append', default=[],
                       metavar='SECTION.KEY=[V1,V2]',
                       help="one axis of the grid, may be repeated")
    sweep.add_argument('--out', default='runs')

    report = commands.add_parser('report', help="tabulate finished runs")
    report.add_argument('run_dirs', nargs='+')
    report.add_argument('--series-dir', default='.',
                        help="where the accuracy series are written")

    inspect = commands.add_parser('partition-inspect',
                                  help="class histogram of every client")
    with_config(inspect)
    inspect.add_argument('--beta', type=_beta,
                         help="Dirichlet concentration, or iid")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = 'DEBUG' if args.verbose else 'WARNING' if args.quiet else 'INFO'
    log = create_logger(level, 'stream')
    if args.command == 'run':
        return cmd_run(args.config, args.overrides, args.seed, args.out, log)
    if args.command == 'sweep':
        return cmd_sweep(args.config, args.axis, args.overrides, args.seed,
                         args.out, log)
    if args.command == 'report':
        return cmd_report(args.run_dirs, args.series_dir, log)
    return cmd_partition_inspect(args.config, args.overrides, args.seed,
                                 args.beta, log)


if __name__ == '__main__':
    sys.exit(main())
