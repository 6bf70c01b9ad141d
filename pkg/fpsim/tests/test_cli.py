"""tests for the command line front-end"""
import csv
import io
import os

import yaml

from ..cli import (EXIT_CONFIG, EXIT_FAILED, EXIT_NUMERICAL, EXIT_OK,
                   cmd_partition_inspect, cmd_report, cmd_run, cmd_sweep,
                   main, run_directory)
from ..configuration import load_config
from ..errors import NumericalFailureError
from .custom_fixtures import log, run_root, write_config  # noqa: F401


def _only_run(out_root):
    runs = [name for name in os.listdir(out_root)
            if os.path.isdir(os.path.join(out_root, name))]
    assert len(runs) == 1
    return os.path.join(out_root, runs[0])


def test_run_writes_every_artifact(run_root, log):
    path = write_config(run_root)
    out = os.path.join(run_root, 'runs')
    assert cmd_run(path, ['defense.kind=median', 'attack.kind=dfa_r'],
                   seed=1, out_root=out, logger=log) == EXIT_OK
    run_dir = _only_run(out)
    for name in ('manifest.yaml', 'rounds.csv', 'summary.yaml', 'final.fpv',
                 'run.log'):
        assert os.path.isfile(os.path.join(run_dir, name))
    with open(os.path.join(run_dir, 'manifest.yaml')) as stream:
        manifest = yaml.safe_load(stream)
    assert manifest['config']['defense']['kind'] == 'median'
    assert manifest['config']['attack']['kind'] == 'dfa_r'
    assert manifest['seed'] == 1
    assert run_dir == run_directory(out, load_config(
        path, ['defense.kind=median', 'attack.kind=dfa_r',
               'experiment.seed=1']))


def test_runs_are_byte_identical(run_root, log):
    path = write_config(run_root)
    out = os.path.join(run_root, 'runs')
    assert cmd_run(path, seed=2, out_root=out, logger=log) == EXIT_OK
    with open(os.path.join(_only_run(out), 'rounds.csv'), 'rb') as stream:
        first = stream.read()
    assert cmd_run(path, seed=2, out_root=out, logger=log) == EXIT_OK
    with open(os.path.join(_only_run(out), 'rounds.csv'), 'rb') as stream:
        assert stream.read() == first


def test_run_exit_codes(run_root, log, mocker):
    missing = os.path.join(run_root, 'missing.yaml')
    assert cmd_run(missing, logger=log) == EXIT_CONFIG
    path = write_config(run_root, experiment={'attacker_fraction': 0.6})
    assert cmd_run(path, out_root=run_root, logger=log) == EXIT_CONFIG

    path = write_config(run_root)
    mocker.patch('fpsim.cli.run_experiment',
                 side_effect=NumericalFailureError('overflow', 2, 1, 4))
    assert cmd_run(path, out_root=os.path.join(run_root, 'runs'),
                   logger=log) == EXIT_NUMERICAL


def test_sweep(run_root, log):
    path = write_config(run_root)
    out = os.path.join(run_root, 'sweep')
    stream = io.StringIO()
    code = cmd_sweep(path, ['defense.kind=[mkrum, median]',
                            'attack.kind=[lie, random]'], out_root=out,
                     logger=log, stream=stream)
    assert code == EXIT_OK
    with open(os.path.join(out, 'sweep.csv')) as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 4
    assert {(row['defense'], row['attack']) for row in rows} == {
        ('mkrum', 'lie'), ('mkrum', 'random'), ('median', 'lie'),
        ('median', 'random')}
    assert all(row['status'] == 'ok' for row in rows)
    assert all(row['dpr_pct'] == 'N/A' for row in rows
               if row['defense'] == 'median')
    assert 'defense.kind' in stream.getvalue()


def test_sweep_keeps_going_after_a_bad_cell(run_root, log):
    path = write_config(run_root)
    out = os.path.join(run_root, 'sweep')
    code = cmd_sweep(path, ['experiment.attacker_fraction=[0.2, 0.7]'],
                     out_root=out, logger=log, stream=io.StringIO())
    assert code == EXIT_FAILED
    with open(os.path.join(out, 'sweep.csv')) as handle:
        statuses = [row['status'] for row in csv.DictReader(handle)]
    assert statuses[0] == 'ok'
    assert statuses[1].startswith('invalid')


def test_report(run_root, log):
    path = write_config(run_root)
    out = os.path.join(run_root, 'runs')
    for seed in (1, 2):
        cmd_run(path, ['attack.kind=lie', 'defense.kind=trmean'], seed=seed,
                out_root=out, logger=log)
    run_dirs = sorted(os.path.join(out, name) for name in os.listdir(out))
    series = os.path.join(run_root, 'series')
    stream = io.StringIO()
    assert cmd_report(run_dirs, series, log, stream) == EXIT_OK
    table = stream.getvalue()
    assert 'N/A' in table
    assert 'mean of 2 runs' in table
    for run_dir in run_dirs:
        name = os.path.basename(run_dir)
        with open(os.path.join(series, 'series_%s.csv' % name)) as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == ['round', 'accuracy']
        assert len(rows) == 4


def test_report_flags_corrupt_runs(run_root, log):
    path = write_config(run_root)
    out = os.path.join(run_root, 'runs')
    cmd_run(path, seed=1, out_root=out, logger=log)
    run_dir = _only_run(out)
    with open(os.path.join(run_dir, 'summary.yaml'), 'w') as stream:
        stream.write('not: a summary\n')
    stream = io.StringIO()
    assert cmd_report([run_dir], os.path.join(run_root, 'series'), log,
                      stream) == EXIT_FAILED
    assert 'invalid' in stream.getvalue()


def test_partition_inspect(run_root, log):
    path = write_config(run_root)
    stream = io.StringIO()
    assert cmd_partition_inspect(path, beta='iid', logger=log,
                                 stream=stream) == EXIT_OK
    output = stream.getvalue()
    assert 'mean client entropy' in output
    assert 'beta iid' in output


def test_main_dispatches(run_root, mocker):
    run = mocker.patch('fpsim.cli.cmd_run', return_value=EXIT_OK)
    assert main(['-q', 'run', '--config', 'exp.yaml', '--set',
                 'defense.kind=median', '--seed', '4', '--out',
                 run_root]) == EXIT_OK
    args = run.call_args[0]
    assert args[:4] == ('exp.yaml', ['defense.kind=median'], 4, run_root)
