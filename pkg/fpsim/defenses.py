"""
.. module:: defenses
    :synopsis: Server-side aggregation rules

Selection rules (Krum, mKrum, Bulyan, RefD) decide which clients pass and
report it in a :class:`DefenseVerdict`; statistic rules (trimmed mean,
median) admit everyone and only change how the parameters are combined.
Ties always favour the lowest client id.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConfigurationError, RejectedInputError
from .logger import get_logger
from .nn import forward
from .updates import ClientUpdate, fedavg, stack_params


@dataclass
class DefenseConfig:
    kind: str = 'fedavg'
    f: int = 0
    m: int = None
    k: int = None
    reject: int = None
    alpha: float = 1.0


@dataclass
class DefenseVerdict:
    admitted: tuple
    rejected: tuple
    aggregate: np.ndarray
    scores: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.admitted:
            raise RejectedInputError("a defense must admit some update")


def _matrix(updates):
    if len(updates) and isinstance(updates[0], ClientUpdate):
        return stack_params(updates)
    matrix = np.asarray(updates, dtype=float)
    if matrix.ndim == 1:
        matrix = matrix.reshape(-1, 1)
    return matrix


def _ids(updates):
    return np.array([update.client_id for update in updates])


def _neighbour_scores(matrix, neighbours):
    """Sum of squared distances to the `neighbours` closest other points"""
    distances = np.sort(cdist(matrix, matrix, 'sqeuclidean'), axis=1)
    # column 0 is the point itself
    return distances[:, 1:neighbours + 1].sum(axis=1)


def krum_scores(updates, f):
    """Krum score of every update, with n - f - 2 neighbours"""
    matrix = _matrix(updates)
    count = len(matrix)
    if count - f - 2 < 1:
        raise ConfigurationError(
            "Krum needs n - f - 2 >= 1, got n=%d, f=%d" % (count, f),
            'defense.f')
    return _neighbour_scores(matrix, count - f - 2)


def _rank(scores, ids):
    """Indices sorted by score, then by client id"""
    return np.lexsort((ids, scores))


def mkrum(updates, f, m=None):
    """Admit the m updates with the lowest Krum scores, m = 1 is Krum"""
    count = len(updates)
    if m is None:
        m = count - f
    if not 1 <= m <= count:
        raise ConfigurationError("m must lie in [1, %d]" % count,
                                 'defense.m')
    scores = krum_scores(updates, f)
    ids = _ids(updates)
    order = _rank(scores, ids)
    admitted = [updates[index] for index in sorted(order[:m])]
    return DefenseVerdict(
        tuple(int(ids[index]) for index in sorted(order[:m])),
        tuple(int(ids[index]) for index in sorted(order[m:])),
        fedavg(admitted),
        {int(client): float(score) for client, score in zip(ids, scores)})


def trimmed_mean(updates, k):
    """Per coordinate, the mean once the k lowest and k highest are gone"""
    matrix = _matrix(updates)
    count = len(matrix)
    if k < 0 or 2 * k >= count:
        raise ConfigurationError(
            "trimming needs 2k < n, got n=%d, k=%d" % (count, k),
            'defense.k')
    return np.sort(matrix, axis=0)[k:count - k].mean(axis=0)


def coordinate_median(updates):
    """Per-coordinate median, the mean of the middle pair for even n"""
    matrix = _matrix(updates)
    if len(matrix) == 0:
        raise RejectedInputError("no update to take the median of")
    return np.median(matrix, axis=0)


def bulyan(updates, f):
    """
    Pick n - 2f updates by repeated Krum, then trim f from each side of
    every coordinate of the picked set
    """
    count = len(updates)
    if count < 4 * f + 3:
        raise ConfigurationError(
            "Bulyan needs n >= 4f + 3, got n=%d, f=%d" % (count, f),
            'defense.f')
    matrix = _matrix(updates)
    ids = _ids(updates)
    pool = list(range(count))
    picked = []
    for _ in range(count - 2 * f):
        if len(pool) == 1:
            picked.append(pool.pop())
            break
        neighbours = min(max(len(pool) - f - 2, 1), len(pool) - 1)
        scores = _neighbour_scores(matrix[pool], neighbours)
        best = pool[_rank(scores, ids[pool])[0]]
        picked.append(best)
        pool.remove(best)
    picked.sort()
    return DefenseVerdict(
        tuple(int(ids[index]) for index in picked),
        tuple(int(ids[index]) for index in pool),
        trimmed_mean(matrix[picked], f))


def refd_balance(params, classifier, reference):
    """1 / population std of the predicted-class counts, 1 when it is 0"""
    batch = getattr(reference, 'batch', reference)
    if len(batch) == 0:
        raise RejectedInputError("the reference set is empty")
    predicted = np.argmax(forward(params, classifier, batch.images), axis=1)
    counts = np.bincount(predicted, minlength=classifier.num_classes)
    spread = np.std(counts)
    return 1.0 if spread == 0 else float(1.0 / spread)


def refd_confidence(params, classifier, reference):
    """Mean over the reference set of the highest class probability"""
    batch = getattr(reference, 'batch', reference)
    if len(batch) == 0:
        raise RejectedInputError("the reference set is empty")
    return float(np.mean(np.max(forward(params, classifier, batch.images),
                                axis=1)))


def d_score(balance, confidence, alpha=1.0):
    """(1 + a^2) B V / (a^2 B + V)"""
    if balance <= 0 or confidence <= 0 or alpha < 0:
        raise RejectedInputError("D-Score needs B > 0, V > 0 and alpha >= 0")
    weight = alpha ** 2
    return (1 + weight) * balance * confidence / (weight * balance +
                                                  confidence)


def refd(updates, classifier, reference, alpha=1.0, reject=0):
    """Reject the `reject` updates with the lowest D-Scores"""
    count = len(updates)
    if not 0 <= reject < count:
        raise ConfigurationError("must lie in [0, %d)" % count,
                                 'defense.reject')
    scores = np.array([
        d_score(refd_balance(update.params, classifier, reference),
                refd_confidence(update.params, classifier, reference), alpha)
        for update in updates])
    ids = _ids(updates)
    # lowest score first, the higher id first among equals
    order = np.lexsort((-ids, scores))
    rejected = set(order[:reject].tolist())
    admitted = [index for index in range(count) if index not in rejected]
    return DefenseVerdict(
        tuple(int(ids[index]) for index in admitted),
        tuple(int(ids[index]) for index in sorted(rejected)),
        fedavg([updates[index] for index in admitted]),
        {int(client): float(score) for client, score in zip(ids, scores)})


class Defense(object):
    """The aggregation rule the server applies every round"""

    def __init__(self, config, classifier=None, reference=None, logger=None):
        self.config = config
        self.classifier = classifier
        self.reference = reference
        self.log = get_logger(logger)
        self._clamp_reported = False
        if config.kind == 'refd' and reference is None:
            raise ConfigurationError("RefD needs a reference set",
                                     'defense.kind')

    @classmethod
    def from_config(cls, config, classifier=None, reference=None,
                    logger=None):
        section = config.defense
        return cls(DefenseConfig(section.kind, config.derived_f(), section.m,
                                 section.k, section.reject, section.alpha),
                   classifier, reference, logger)

    def aggregate(self, updates):
        config = self.config
        kind = config.kind
        everyone = tuple(update.client_id for update in updates)
        if kind == 'fedavg':
            return DefenseVerdict(everyone, (), fedavg(updates))
        if kind in ('krum', 'mkrum'):
            m = 1 if kind == 'krum' else config.m
            return mkrum(updates, config.f, m)
        if kind == 'bulyan':
            f = config.f
            if len(updates) < 4 * f + 3:
                f = max((len(updates) - 3) // 4, 0)
                if not self._clamp_reported:
                    self._clamp_reported = True
                    self.log.warning("Bulyan cannot tolerate f=%d with %d"
                                     " updates, using f=%d" % (
                                         config.f, len(updates), f))
            return bulyan(updates, f)
        if kind == 'trmean':
            k = config.k if config.k is not None else config.f
            return DefenseVerdict(everyone, (), trimmed_mean(updates, k))
        if kind == 'median':
            return DefenseVerdict(everyone, (), coordinate_median(updates))
        if kind == 'refd':
            reject = config.reject if config.reject is not None else \
                config.f
            return refd(updates, self.classifier, self.reference,
                        config.alpha, reject)
        raise ConfigurationError("unknown defense %r" % kind, 'defense.kind')
