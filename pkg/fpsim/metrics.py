"""
.. module:: metrics
    :synopsis: Round records, the per-round CSV and run summaries

Everything in a :class:`Summary` can be recomputed from the CSV: numbers
are summarised as they were written, with six decimals for accuracies.
"""
import csv
import os
from dataclasses import asdict, dataclass

import numpy as np
import yaml

from .constants import ROUNDS_HEADER, SELECTION_DEFENSES
from .errors import RejectedInputError, UndefinedMetricError


@dataclass
class RoundRecord:
    round: int
    accuracy: float
    train_loss: float
    selected: tuple
    malicious_selected: int
    malicious_admitted: int
    defense_ms: float = 0.0
    attack_ms: float = 0.0

    def __post_init__(self):
        if self.malicious_admitted > self.malicious_selected:
            raise RejectedInputError(
                "round %d: %d attackers admitted out of %d selected" % (
                    self.round, self.malicious_admitted,
                    self.malicious_selected))
        if not 0 <= self.accuracy <= 1:
            raise RejectedInputError("accuracy %r outside [0, 1]" % (
                self.accuracy,))

    def as_row(self):
        return [str(self.round), '%.6f' % self.accuracy,
                '%.6f' % self.train_loss,
                ';'.join(str(client) for client in self.selected),
                str(self.malicious_selected), str(self.malicious_admitted),
                '%.3f' % self.defense_ms, '%.3f' % self.attack_ms]

    @classmethod
    def from_row(cls, row):
        selected = tuple(int(client) for client in row['selected'].split(';')
                         if client)
        return cls(int(row['round']), float(row['accuracy']),
                   float(row['train_loss']), selected,
                   int(row['malicious_selected']),
                   int(row['malicious_admitted']), float(row['defense_ms']),
                   float(row['attack_ms']))


@dataclass
class Summary:
    acc: float
    acc_m: float
    asr_pct: float
    dpr_pct: float
    config_hash: str = ''
    seed: int = 0
    csv_path: str = ''
    defense: str = 'fedavg'
    attackers_selected: int = 0
    attackers_admitted: int = 0
    inference_ms: float = 0.0

    def to_dict(self):
        return asdict(self)


def asr(acc, acc_m):
    """(acc - acc_m) / acc * 100, negative when the attacked run does better"""
    if acc == 0:
        raise UndefinedMetricError("ASR is undefined for a zero baseline")
    return (acc - acc_m) / acc * 100.0


def dpr(passed, selected):
    """passed / selected * 100, None when no attacker was ever selected"""
    if selected == 0:
        return None
    return passed / selected * 100.0


def overhead_estimate(reference_size, num_updates, inference_ms,
                      per_item_ms=0.0):
    """
    Predicted RefD cost in milliseconds: every update is evaluated on every
    reference sample, plus linear scoring and selection terms
    """
    if num_updates == 0:
        return 0.0
    return reference_size * num_updates * inference_ms + per_item_ms * (
        reference_size + num_updates)


def write_rounds_csv(records, path):
    with open(path, 'w', newline='') as stream:
        writer = csv.writer(stream, lineterminator='\n')
        writer.writerow(ROUNDS_HEADER)
        for record in records:
            writer.writerow(record.as_row())
    return path


def read_rounds_csv(path):
    with open(path, newline='') as stream:
        reader = csv.DictReader(stream)
        if reader.fieldnames != ROUNDS_HEADER:
            raise RejectedInputError("%s does not have the rounds header" %
                                     path)
        return [RoundRecord.from_row(row) for row in reader]


def summarize(records, acc, defense, config_hash='', seed=0, csv_path=''):
    """Summary of a run given the baseline accuracy `acc`"""
    if not records:
        raise RejectedInputError("cannot summarise a run without rounds")
    acc_m = max(float('%.6f' % record.accuracy) for record in records)
    selected = sum(record.malicious_selected for record in records)
    admitted = sum(record.malicious_admitted for record in records)
    rate = dpr(admitted, selected) if defense in SELECTION_DEFENSES else None
    success = asr(acc, acc_m) if acc > 0 else None
    return Summary(float(acc), acc_m, success, rate, config_hash, int(seed),
                   csv_path, defense, selected, admitted)


def summary_from_csv(path, acc, defense, config_hash='', seed=0):
    """Recompute a Summary from a per-round CSV"""
    return summarize(read_rounds_csv(path), acc, defense, config_hash, seed,
                     path)


def aggregate_summaries(summaries):
    """Mean of several runs; a rate is kept only if every run defines it"""
    if not summaries:
        raise RejectedInputError("no summary to aggregate")

    def mean_of(name):
        values = [getattr(summary, name) for summary in summaries]
        if any(value is None for value in values):
            return None
        return float(np.mean(values))

    return {
        'runs': len(summaries),
        'seeds': [summary.seed for summary in summaries],
        'acc': mean_of('acc'),
        'acc_m': mean_of('acc_m'),
        'asr_pct': mean_of('asr_pct'),
        'dpr_pct': mean_of('dpr_pct'),
    }


def write_summary(summary, path):
    with open(path, 'w') as stream:
        yaml.safe_dump(summary.to_dict(), stream, default_flow_style=False,
                       sort_keys=True)
    return path


def read_summary(path):
    with open(path) as stream:
        data = yaml.safe_load(stream)
    if not isinstance(data, dict):
        raise RejectedInputError("%s is not a summary" % path)
    try:
        summary = Summary(**data)
    except TypeError as error:
        raise RejectedInputError("%s is not a summary (%s)" % (path, error))
    for name in ('acc', 'acc_m'):
        if not isinstance(getattr(summary, name), (int, float)):
            raise RejectedInputError("%s: %s is not a number" % (path, name))
    if summary.csv_path and not os.path.isabs(summary.csv_path):
        summary.csv_path = os.path.join(os.path.dirname(path),
                                        summary.csv_path)
    return summary
