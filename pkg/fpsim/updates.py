"""
.. module:: updates
    :synopsis: Client updates and their weighted average

Shared by the server, the adversary and the defenses.
"""
from dataclasses import dataclass

import numpy as np

from .errors import AggregationError, NumericalFailureError, \
    RejectedInputError


@dataclass
class ClientUpdate:
    """A submitted ParamVector with the sample count n_i its client claims"""
    client_id: int
    params: np.ndarray
    n_samples: int
    train_loss: float = 0.0

    def __post_init__(self):
        self.params = np.asarray(self.params)
        if self.n_samples < 1:
            raise RejectedInputError(
                "client %s claims %d samples" % (self.client_id,
                                                 self.n_samples))
        bad = np.flatnonzero(~np.isfinite(self.params))
        if len(bad):
            raise NumericalFailureError("non-finite update",
                                        parameter_index=int(bad[0]),
                                        client_id=self.client_id)


def stack_params(updates):
    """(n, d) matrix of the update parameters, rows in input order"""
    if not updates:
        raise AggregationError("cannot aggregate an empty list of updates")
    lengths = {len(update.params) for update in updates}
    if len(lengths) != 1:
        raise AggregationError("updates of different lengths %s" % (
            sorted(lengths),))
    return np.stack([np.asarray(update.params, dtype=float)
                     for update in updates])


def fedavg(updates):
    """Average of the updates weighted by their claimed sample counts"""
    stack = stack_params(updates)
    weights = np.array([update.n_samples for update in updates], dtype=float)
    return np.average(stack, axis=0, weights=weights)
