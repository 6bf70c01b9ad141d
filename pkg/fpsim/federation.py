"""
.. module:: federation
    :synopsis: The federated server loop

Every round the server draws K clients uniformly, lets the benign ones run
local SGD from the current global model, asks the adversary for the update
of the selected malicious ones, and hands everything to the configured
defense, whose aggregate becomes the next global model.
"""
import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .attacks import Adversary, BenignView
from .checkpoint import save_params
from .constants import (STREAM_CLIENT, STREAM_INIT, STREAM_SELECT,
                        WORKERS_ENV)
from .configuration import baseline_of, config_hash
from .data import load_dataset, make_reference_set, partition_dataset
from .defenses import Defense
from .errors import (ConfigurationError, NumericalFailureError,
                     RejectedInputError)
from .logger import get_logger
from .metrics import RoundRecord, summarize, write_rounds_csv
from .nn import (ClassifierSpec, accuracy, forward, init_params, loss_and_grad,
                 sgd_step)
from .updates import ClientUpdate, fedavg  # noqa: F401


@dataclass
class RoundContext:
    round_index: int
    global_params: np.ndarray
    previous_params: np.ndarray
    selected: tuple = field(default_factory=tuple)


def round_rng(seed, round_index, stream):
    return np.random.default_rng(np.random.SeedSequence(
        [int(seed), stream, int(round_index)]))


def client_rng(seed, round_index, client_id):
    """Depends on (seed, round, client) only, never on execution order"""
    return np.random.default_rng(np.random.SeedSequence(
        [int(seed), STREAM_CLIENT, int(round_index), int(client_id)]))


def pick_malicious(num_clients, fraction, seed):
    """The first ceil(fraction * N) ids of a seeded shuffle, sorted"""
    count = int(math.ceil(fraction * num_clients - 1e-9))
    rng = np.random.default_rng(np.random.SeedSequence(
        [int(seed), STREAM_INIT, 1]))
    return tuple(sorted(int(e) for e in
                        rng.permutation(num_clients)[:count]))


def select_clients(num_clients, per_round, rng, eligible=None):
    """
    `per_round` distinct ids drawn uniformly without replacement, sorted.
    When `eligible` is given the draw is restricted to those ids.
    """
    candidates = np.arange(num_clients) if eligible is None else \
        np.asarray(sorted(eligible), dtype=np.int64)
    if per_round > len(candidates):
        raise ConfigurationError(
            "cannot select %d clients out of %d eligible" % (
                per_round, len(candidates)), 'experiment.per_round')
    chosen = rng.choice(candidates, size=per_round, replace=False)
    return tuple(sorted(int(e) for e in chosen))


def local_train(global_params, spec, data, eta, epochs, batch_size=None,
                rng=None, client_id=None):
    """
    `epochs` passes of mini-batch SGD over `data`, starting from the global
    model. Batches are drawn from a fresh permutation every epoch when an
    `rng` is given, in order otherwise.
    """
    if len(data) == 0:
        raise RejectedInputError("client %s has no data" % client_id)
    params = np.array(global_params, copy=True)
    batch_size = batch_size or len(data)
    losses = []
    for _ in range(epochs):
        order = rng.permutation(len(data)) if rng is not None else \
            np.arange(len(data))
        losses = []
        for start in range(0, len(data), batch_size):
            loss, grad = loss_and_grad(
                params, spec, data.subset(order[start:start + batch_size]))
            params = sgd_step(params, grad.astype(params.dtype), eta)
            losses.append(loss)
    train_loss = float(np.mean(losses)) if losses else 0.0
    return ClientUpdate(client_id if client_id is not None else -1, params,
                        len(data), train_loss)


def _workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, '1')))
    except ValueError:
        return 1


class Server(object):
    """
    Owns the global model and runs the rounds of one experiment

    Parameters
    ----------
    config : ExperimentConfig
    dataset : Dataset
    logger : logging.Logger, optional
    run_dir : str, optional
        where periodic checkpoints go
    workers : int, optional
        threads training clients concurrently, FPSIM_WORKERS by default
    """

    def __init__(self, config, dataset, logger=None, run_dir=None,
                 workers=None):
        self.config = config
        self.dataset = dataset
        self.log = get_logger(logger)
        self.run_dir = run_dir
        self.workers = workers or _workers()
        exp = config.experiment
        self.seed = exp.seed

        self.spec = ClassifierSpec(dataset.image_dims,
                                   tuple(config.model.hidden),
                                   dataset.num_classes)
        self.dtype = np.float32 if config.model.precision == 'float32' \
            else np.float64
        self.partition = partition_dataset(dataset, exp.clients,
                                           config.dataset.beta, self.seed)
        self.malicious = pick_malicious(exp.clients, exp.attacker_fraction,
                                        self.seed)
        self.log.info("%d clients, %d malicious: %s" % (
            exp.clients, len(self.malicious), list(self.malicious)))

        # Synthetic and model-space attackers need no data of their own
        dataless = config.attack.kind not in ('none', 'real_data')
        sizes = self.partition.sizes
        self.eligible = [client for client in range(exp.clients)
                         if sizes[client] > 0 or
                         (dataless and client in self.malicious)]
        if len(self.eligible) < exp.clients:
            self.log.warning("%d clients own no data and are never"
                             " selected" % (exp.clients - len(self.eligible)))

        reference = None
        if config.defense.kind == 'refd':
            reference = make_reference_set(dataset,
                                           config.dataset.reference_size,
                                           self.seed)
        self.defense = Defense.from_config(config, self.spec, reference,
                                           self.log)
        self.adversary = None
        if config.attack.kind != 'none' and self.malicious:
            self.adversary = Adversary.from_config(config, self.spec,
                                                   self.log)

        rng = np.random.default_rng(np.random.SeedSequence(
            [int(self.seed), STREAM_INIT, 0]))
        self.global_params = init_params(self.spec, rng,
                                         config.model.init_scale, self.dtype)
        self.previous_params = self.global_params.copy()
        self._accuracy = None

        # per-sample cost of one reference-set inference, for the RefD
        # overhead report
        self.inference_ms = 0.0
        if reference is not None and config.metrics.wallclock:
            start = time.perf_counter()
            forward(self.global_params, self.spec, reference.batch.images)
            self.inference_ms = (time.perf_counter() - start) * 1e3 / len(
                reference)

    def _train_client(self, client_id, round_index):
        model = self.config.model
        try:
            return local_train(
                self.global_params, self.spec,
                self.partition.client_batch(self.dataset, client_id),
                model.learning_rate, model.local_epochs, model.batch_size,
                client_rng(self.seed, round_index, client_id), client_id)
        except NumericalFailureError as error:
            raise error.located(round_index, client_id)

    def _benign_updates(self, benign, round_index):
        if self.workers > 1 and len(benign) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                return list(pool.map(
                    lambda client: self._train_client(client, round_index),
                    benign))
        return [self._train_client(client, round_index)
                for client in benign]

    def _malicious_updates(self, context, attackers, benign_updates):
        if self.adversary is None:
            return [self._train_client(client, context.round_index)
                    for client in attackers]
        view = BenignView.empty() if self.adversary.data_free else \
            BenignView(benign_updates)
        shard = None
        if self.config.attack.kind == 'real_data':
            shard = self.partition.client_batch(self.dataset, attackers[0])
        params, n_samples = self.adversary.craft(context, view, shard)
        try:
            return [ClientUpdate(client, params.astype(self.dtype),
                                 n_samples)
                    for client in attackers]
        except NumericalFailureError as error:
            raise error.located(context.round_index, attackers[0])

    def play_round(self, round_index):
        """Run one round and return its RoundRecord"""
        exp = self.config.experiment
        wallclock = self.config.metrics.wallclock
        selected = select_clients(
            exp.clients, exp.per_round,
            round_rng(self.seed, round_index, STREAM_SELECT), self.eligible)
        attackers = [client for client in selected
                     if client in self.malicious]
        benign = [client for client in selected
                  if client not in self.malicious]
        context = RoundContext(round_index, self.global_params,
                               self.previous_params, selected)
        self.log.debug("round %d: selected %s" % (round_index,
                                                  list(selected)))

        benign_updates = self._benign_updates(benign, round_index)
        attack_start = time.perf_counter()
        malicious_updates = self._malicious_updates(context, attackers,
                                                    benign_updates) \
            if attackers else []
        attack_ms = (time.perf_counter() - attack_start) * 1e3

        updates = sorted(benign_updates + malicious_updates,
                         key=lambda update: update.client_id)
        defense_start = time.perf_counter()
        verdict = self.defense.aggregate(updates)
        defense_ms = (time.perf_counter() - defense_start) * 1e3

        aggregate = np.asarray(verdict.aggregate, dtype=self.dtype)
        bad = np.flatnonzero(~np.isfinite(aggregate))
        if len(bad):
            raise NumericalFailureError("non-finite global model",
                                        parameter_index=int(bad[0]),
                                        round_index=round_index)
        self.previous_params = self.global_params
        self.global_params = aggregate

        admitted = sum(1 for client in verdict.admitted
                       if client in self.malicious)
        losses = [update.train_loss for update in benign_updates]
        record = RoundRecord(
            round_index, self._evaluate(round_index),
            float(np.mean(losses)) if losses else 0.0, selected,
            len(attackers), admitted,
            defense_ms if wallclock else 0.0,
            attack_ms if wallclock and attackers else 0.0)
        self.log.info("round %d: accuracy %.4f, attackers %d selected %d"
                      " admitted" % (round_index, record.accuracy,
                                     len(attackers), admitted))
        self._checkpoint(round_index)
        return record

    def _evaluate(self, round_index):
        exp = self.config.experiment
        last = round_index == exp.rounds - 1
        if last or (round_index + 1) % exp.eval_interval == 0 or \
                self._accuracy is None:
            self._accuracy = accuracy(self.global_params, self.spec,
                                      self.dataset.test)
        return self._accuracy

    def _checkpoint(self, round_index):
        interval = self.config.experiment.checkpoint_interval
        if self.run_dir and interval and (round_index + 1) % interval == 0:
            save_params(self.global_params, os.path.join(
                self.run_dir, 'checkpoints', 'round_%04d.fpv' % round_index))

    def run(self):
        """Play every round, returning the list of RoundRecords"""
        return [self.play_round(round_index)
                for round_index in range(self.config.experiment.rounds)]


_BASELINES = {}
_BASELINES_LOCK = threading.Lock()


def baseline_accuracy(config, dataset, logger=None, workers=None):
    """
    Best accuracy of the attack-free, defense-free twin of `config`,
    computed once per (dataset, configuration hash, seed)
    """
    log = get_logger(logger)
    twin = baseline_of(config)
    key = (dataset.name, config_hash(twin), twin.experiment.seed)
    with _BASELINES_LOCK:
        if key in _BASELINES:
            return _BASELINES[key]
    log.info("running the attack-free baseline")
    records = Server(twin, dataset, log, workers=workers).run()
    best = max(float('%.6f' % record.accuracy) for record in records)
    with _BASELINES_LOCK:
        _BASELINES[key] = best
    return best


def run_experiment(config, dataset=None, logger=None, run_dir=None,
                   workers=None):
    """
    Run a whole experiment and summarise it

    When `run_dir` is given the per-round CSV, periodic checkpoints and the
    final checkpoint are written there.

    Returns
    -------
    records : list of RoundRecord
    summary : Summary
    """
    log = get_logger(logger)
    if dataset is None:
        dataset = load_dataset(config.dataset, config.experiment.seed, log)
    server = Server(config, dataset, log, run_dir, workers)
    records = server.run()

    csv_path = ''
    if run_dir:
        csv_path = os.path.join(run_dir, 'rounds.csv')
        write_rounds_csv(records, csv_path)
        save_params(server.global_params,
                    os.path.join(run_dir, 'final.fpv'))
    is_baseline = config.attack.kind == 'none' and \
        config.defense.kind == 'fedavg'
    if is_baseline:
        acc = max(float('%.6f' % record.accuracy) for record in records)
    else:
        acc = baseline_accuracy(config, dataset, log, workers)
    summary = summarize(records, acc, config.defense.kind,
                        config_hash(config), config.experiment.seed,
                        csv_path)
    summary.inference_ms = server.inference_ms
    log.info("acc %.4f, acc_m %.4f, ASR %s, DPR %s" % (
        summary.acc, summary.acc_m, summary.asr_pct, summary.dpr_pct))
    return records, summary
