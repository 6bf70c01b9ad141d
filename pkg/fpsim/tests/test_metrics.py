"""tests for the run bookkeeping"""
import os

import pytest

from ..constants import ROUNDS_HEADER
from ..errors import RejectedInputError, UndefinedMetricError
from ..metrics import (RoundRecord, Summary, aggregate_summaries, asr, dpr,
                       overhead_estimate, read_rounds_csv, read_summary,
                       summarize, summary_from_csv, write_rounds_csv,
                       write_summary)
from .custom_fixtures import run_root  # noqa: F401


def _records():
    return [RoundRecord(0, 0.5, 1.2, (1, 4, 7), 1, 1),
            RoundRecord(1, 0.6123456, 0.9, (0, 4, 9), 2, 0),
            RoundRecord(2, 0.55, 0.8, (2, 3, 5), 1, 1)]


def test_asr():
    assert asr(82, 52.6) == pytest.approx(35.85, abs=0.01)
    assert asr(0.7, 0.7) == 0
    assert asr(50, 25) == pytest.approx(50)
    assert asr(0.5, 0.6) < 0
    with pytest.raises(UndefinedMetricError):
        asr(0, 0.3)


def test_dpr():
    assert dpr(3, 4) == pytest.approx(75)
    assert dpr(0, 4) == 0
    assert dpr(0, 0) is None


def test_overhead_estimate():
    assert overhead_estimate(1000, 0, 0.2) == 0
    assert overhead_estimate(2000, 10, 0.01) == pytest.approx(
        2 * overhead_estimate(1000, 10, 0.01))


def test_record_invariants():
    with pytest.raises(RejectedInputError):
        RoundRecord(0, 0.5, 1.0, (1, 2), 1, 2)
    with pytest.raises(RejectedInputError):
        RoundRecord(0, 1.5, 1.0, (1, 2), 0, 0)


def test_rounds_csv(run_root):
    path = write_rounds_csv(_records(), os.path.join(run_root, 'rounds.csv'))
    with open(path) as stream:
        lines = stream.read().splitlines()
    assert lines[0] == ','.join(ROUNDS_HEADER)
    assert lines[2].split(',')[:4] == ['1', '0.612346', '0.900000', '0;4;9']
    records = read_rounds_csv(path)
    assert [record.selected for record in records] == [
        (1, 4, 7), (0, 4, 9), (2, 3, 5)]


def test_wrong_header_is_rejected(run_root):
    path = os.path.join(run_root, 'rounds.csv')
    with open(path, 'w') as stream:
        stream.write('round,accuracy\n0,0.5\n')
    with pytest.raises(RejectedInputError):
        read_rounds_csv(path)


def test_summarize():
    summary = summarize(_records(), 0.8, 'mkrum', 'abc', 4)
    assert summary.acc_m == 0.612346
    assert summary.attackers_selected == 4
    assert summary.attackers_admitted == 2
    assert summary.dpr_pct == pytest.approx(50)
    assert summary.asr_pct == pytest.approx((0.8 - 0.612346) / 0.8 * 100)
    assert summarize(_records(), 0.8, 'median').dpr_pct is None


def test_summary_recomputed_from_csv(run_root):
    records = _records()
    path = write_rounds_csv(records, os.path.join(run_root, 'rounds.csv'))
    direct = summarize(records, 0.8, 'bulyan', csv_path=path)
    assert summary_from_csv(path, 0.8, 'bulyan') == direct


def test_summary_file(run_root):
    write_rounds_csv(_records(), os.path.join(run_root, 'rounds.csv'))
    summary = summarize(_records(), 0.8, 'trmean', 'abc', 2, 'rounds.csv')
    path = write_summary(summary, os.path.join(run_root, 'summary.yaml'))
    loaded = read_summary(path)
    assert loaded.dpr_pct is None
    assert loaded.acc_m == summary.acc_m
    assert loaded.csv_path == os.path.join(run_root, 'rounds.csv')


def test_corrupt_summary(run_root):
    path = os.path.join(run_root, 'summary.yaml')
    with open(path, 'w') as stream:
        stream.write('- just\n- a list\n')
    with pytest.raises(RejectedInputError):
        read_summary(path)
    with open(path, 'w') as stream:
        stream.write('acc: high\nacc_m: 0.5\nasr_pct: 1\ndpr_pct: null\n')
    with pytest.raises(RejectedInputError):
        read_summary(path)


def test_aggregate_summaries():
    runs = [Summary(0.8, 0.4, 50.0, 10.0, seed=1),
            Summary(0.8, 0.6, 25.0, 30.0, seed=2)]
    mean = aggregate_summaries(runs)
    assert mean['runs'] == 2
    assert mean['acc_m'] == pytest.approx(0.5)
    assert mean['dpr_pct'] == pytest.approx(20)
    runs[1].dpr_pct = None
    assert aggregate_summaries(runs)['dpr_pct'] is None
