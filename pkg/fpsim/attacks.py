"""
.. module:: attacks
    :synopsis: The adversary: data-free synthesis and model-space baselines

DFA-R and DFA-G build a synthetic set S from the global model alone and
train a poisoned classifier on it. LIE, Fang, Min-Max and Min-Sum are
omniscient baselines that read the benign updates of the round. A single
adversary serves every malicious client; all the ones selected in a round
submit the same update.
"""
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .constants import (DATA_FREE_ATTACKS, DIVERGENCE_LOSS, STREAM_ADVERSARY,
                        STREAM_ATTACK)
from .conv import FilterLayerSpec, filter_forward, filter_grads, init_filter
from .errors import DataFreeViolation, RejectedInputError
from .generator import (GeneratorSpec, draw_noise, generator_forward,
                        generator_grads, init_generator)
from .logger import get_logger
from .nn import LabeledBatch, loss_and_grad
from .updates import ClientUpdate, stack_params

# Binary search of the Min-Max / Min-Sum scaling factor
GAMMA_BRACKET = (0.0, 1e3)
GAMMA_ITERATIONS = 30
# Fang: how many times lambda may be halved
FANG_HALVINGS = 20


@dataclass
class AdversaryState:
    kind: str
    poison_label: int
    samples: int = 50
    epochs: int = 5
    learning_rate: float = 0.1
    z_seed: object = 0
    reg_weight: float = 1.0
    static: bool = False
    filter_params: np.ndarray = None
    generator_params: np.ndarray = None


@dataclass
class SynthSet:
    images: np.ndarray
    label: int

    def __len__(self):
        return len(self.images)

    def as_batch(self):
        return LabeledBatch(self.images, np.full(len(self.images),
                                                 self.label))


class BenignView(object):
    """
    The benign updates of the round, as seen by an omniscient attacker

    A data-free view holds nothing and raises on any access.
    """

    def __init__(self, updates=(), data_free=False):
        self._updates = tuple(updates)
        self._data_free = data_free

    @classmethod
    def empty(cls):
        return cls((), data_free=True)

    @property
    def updates(self):
        if self._data_free:
            raise DataFreeViolation(
                "a data-free attack tried to read the benign updates")
        return self._updates

    def __len__(self):
        return len(self.updates)


def uniform_target(num_classes):
    """Y_D = [1/L, ..., 1/L]"""
    return np.full(num_classes, 1.0 / num_classes)


def dfa_r_synthesize(global_params, classifier, filter_spec, state, rng,
                     logger=None):
    """
    Build S by pushing random dummy images through the filter layer

    For each of the |S| samples a fresh dummy image A is drawn uniformly in
    [0, 1]; the filter is then trained for `state.epochs` steps so that the
    frozen global model predicts Y_D on filter(A), and filter(A), clipped to
    [0, 1], joins S. The filter parameters carry over from one sample to
    the next and from one round to the next.
    """
    log = get_logger(logger)
    target = uniform_target(classifier.num_classes)
    if state.static or state.filter_params is None:
        state.filter_params = init_filter(filter_spec, rng)
    epochs = 0 if state.static else state.epochs
    shape = (filter_spec.input_size, filter_spec.input_size,
             filter_spec.channels)
    images = []
    for _ in range(state.samples):
        dummy = rng.random(shape)
        for _ in range(epochs):
            loss, grad = filter_grads(state.filter_params, filter_spec, dummy,
                                      global_params, classifier, target)
            if not np.isfinite(loss) or loss > DIVERGENCE_LOSS:
                log.warning("filter layer diverged (loss %s), reinitialising"
                            % loss)
                state.filter_params = init_filter(filter_spec, rng)
                break
            state.filter_params = state.filter_params - \
                state.learning_rate * grad
        images.append(filter_forward(state.filter_params, filter_spec,
                                     dummy))
    return SynthSet(np.clip(np.array(images), 0.0, 1.0), state.poison_label)


def dfa_g_synthesize(global_params, classifier, generator_spec, state, rng,
                     logger=None):
    """
    Train the generator to move G(Z) away from the poison label

    Z is redrawn from the fixed seed every call. The generator runs
    `state.epochs` steps of gradient ascent on CE(F(G(Z)), poison label),
    and S = G(Z) is labelled with the poison label.
    """
    log = get_logger(logger)
    if state.static or state.generator_params is None:
        state.generator_params = init_generator(generator_spec, rng)
    epochs = 0 if state.static else state.epochs
    noise = draw_noise(generator_spec, state.samples, state.z_seed)
    for _ in range(epochs):
        loss, grad = generator_grads(state.generator_params, generator_spec,
                                     noise, global_params, classifier,
                                     state.poison_label)
        if not np.isfinite(loss) or loss > DIVERGENCE_LOSS:
            log.warning("generator diverged (loss %s), reinitialising" % loss)
            state.generator_params = init_generator(generator_spec, rng)
            break
        state.generator_params = state.generator_params + \
            state.learning_rate * grad
    images = generator_forward(state.generator_params, generator_spec, noise)
    return SynthSet(images, state.poison_label)


def distance_regularizer(params, global_params, previous_params):
    """
    L_d = ||w - w(t)|| - ||w(t) - w(t-1)|| and its gradient in w

    The gradient is zero at w = w(t).
    """
    shift = np.asarray(params, dtype=float) - global_params
    norm = np.linalg.norm(shift)
    value = norm - np.linalg.norm(np.asarray(global_params, dtype=float) -
                                  previous_params)
    if norm == 0:
        return float(value), np.zeros_like(shift)
    return float(value), shift / norm


def adversarial_train(global_params, previous_params, synth, classifier,
                      reg_weight, eta, epochs, batch_size=None, rng=None):
    """
    Train the malicious classifier on S, minimising CE + reg_weight * L_d

    Every SGD step follows the gradient of the whole objective, the CE
    gradient plus reg_weight * (w - w(t)) / ||w - w(t)||, both taken at the
    current parameters. The L_d part is zero while w = w(t).
    """
    batch = synth.as_batch() if isinstance(synth, SynthSet) else synth
    if len(batch) == 0:
        raise RejectedInputError("cannot train on an empty synthetic set")
    center = np.asarray(global_params, dtype=float)
    params = center.copy()
    batch_size = batch_size or len(batch)
    for _ in range(epochs):
        order = rng.permutation(len(batch)) if rng is not None else \
            np.arange(len(batch))
        for start in range(0, len(batch), batch_size):
            _, grad = loss_and_grad(
                params, classifier, batch.subset(order[start:start +
                                                       batch_size]))
            if reg_weight > 0:
                _, pull = distance_regularizer(params, center,
                                               previous_params)
                grad = grad + reg_weight * pull
            params = params - eta * grad
    loss, _ = loss_and_grad(params, classifier, batch)
    reg, _ = distance_regularizer(params, center, previous_params)
    return ClientUpdate(-1, params, len(batch), loss + reg_weight * reg)


def _claimed_samples(updates):
    return max(1, int(round(np.mean([update.n_samples
                                     for update in updates]))))


def lie_attack(view, z=1.5):
    """Coordinate-wise mean - z * std of the benign updates"""
    updates = view.updates
    stack = stack_params(updates)
    mean = stack.mean(axis=0)
    if len(updates) >= 2:
        mean = mean - z * stack.std(axis=0)
    return ClientUpdate(-1, mean, _claimed_samples(updates))


def _perturbation(kind, stack, global_params):
    direction = stack.mean(axis=0) - global_params
    if kind == 'sign':
        return -np.sign(direction)
    if kind == 'std':
        return -stack.std(axis=0)
    norm = np.linalg.norm(direction)
    if norm == 0:
        return np.zeros_like(direction)
    return -direction / norm


def minmax_attack(view, global_params, perturbation='unit',
                  objective='minmax', logger=None):
    """
    mean + gamma * p with the largest gamma keeping the malicious update as
    close to the benign ones as they are to each other

    Min-Max bounds the largest distance to a benign update by the largest
    benign pairwise distance; Min-Sum bounds the sum of squared distances
    by the largest such sum of a benign update.
    """
    log = get_logger(logger)
    updates = view.updates
    stack = stack_params(updates)
    mean = stack.mean(axis=0)
    if len(updates) < 2:
        return ClientUpdate(-1, mean, _claimed_samples(updates))
    direction = _perturbation(perturbation, stack,
                              np.asarray(global_params, dtype=float))

    if objective == 'minsum':
        bound = cdist(stack, stack, 'sqeuclidean').sum(axis=1).max()

        def spread(candidate):
            return cdist(candidate[np.newaxis], stack, 'sqeuclidean').sum()
    else:
        bound = cdist(stack, stack).max()

        def spread(candidate):
            return cdist(candidate[np.newaxis], stack).max()

    low, high = GAMMA_BRACKET
    if spread(mean + high * direction) <= bound:
        log.warning("scaling factor reached the bracket bound %g" % high)
        low = high
    else:
        for _ in range(GAMMA_ITERATIONS):
            middle = (low + high) / 2
            if spread(mean + middle * direction) <= bound:
                low = middle
            else:
                high = middle
    return ClientUpdate(-1, mean + low * direction, _claimed_samples(updates))


def fang_attack(view, global_params, lam):
    """
    global - lam * sign(mean(benign) - global)

    With at least two benign updates, lam is halved (up to 20 times) while
    the malicious update is the single farthest one from the benign mean.
    """
    updates = view.updates
    stack = stack_params(updates)
    global_params = np.asarray(global_params, dtype=float)
    mean = stack.mean(axis=0)
    direction = np.sign(mean - global_params)
    malicious = global_params - lam * direction
    if len(updates) >= 2:
        benign_spread = np.linalg.norm(stack - mean, axis=1).max()
        for _ in range(FANG_HALVINGS):
            if np.linalg.norm(malicious - mean) <= benign_spread:
                break
            lam = lam / 2
            malicious = global_params - lam * direction
    return ClientUpdate(-1, malicious, _claimed_samples(updates))


def random_weights_attack(size, rng, n_samples=1):
    """Parameters drawn i.i.d. uniform in [-1, 1]"""
    return ClientUpdate(-1, rng.uniform(-1.0, 1.0, size=size), n_samples)


class Adversary(object):
    """
    The single adversary controlling every malicious client

    It keeps the state that persists across rounds (poison label, filter
    layer, generator) and crafts one update per round it takes part in.
    """

    def __init__(self, kind, classifier, seed, model_rate, batch_size,
                 train_epochs, state, filter_spec=None, generator_spec=None,
                 lie_z=1.5, perturbation='unit', fang_lambda=None,
                 logger=None):
        self.kind = kind
        self.classifier = classifier
        self.seed = seed
        self.model_rate = model_rate
        self.batch_size = batch_size
        self.train_epochs = train_epochs
        self.state = state
        self.filter_spec = filter_spec
        self.generator_spec = generator_spec
        self.lie_z = lie_z
        self.perturbation = perturbation
        self.fang_lambda = fang_lambda if fang_lambda is not None else \
            10 * model_rate
        self.log = get_logger(logger)
        self._fixed_label = state.poison_label

    @classmethod
    def from_config(cls, config, classifier, logger=None):
        attack = config.attack
        seed = config.experiment.seed
        rng = np.random.default_rng(np.random.SeedSequence(
            [int(seed), STREAM_ADVERSARY, 0]))
        label = attack.poison_label
        if label is None:
            label = int(rng.integers(classifier.num_classes))
        side, _, channels = classifier.input_dims
        state = AdversaryState(
            attack.kind, label, attack.samples, attack.epochs,
            attack.learning_rate,
            [int(seed), STREAM_ADVERSARY, int(attack.z_seed)],
            attack.reg_weight, attack.static)
        filter_spec = generator_spec = None
        if attack.kind == 'dfa_r':
            filter_spec = FilterLayerSpec(
                attack.filter_kernel, attack.filter_stride,
                attack.filter_padding, side, channels,
                attack.filter_input_size)
            state.filter_params = init_filter(filter_spec, rng)
        elif attack.kind == 'dfa_g':
            generator_spec = GeneratorSpec(
                attack.generator_noise_dim, attack.generator_hidden,
                classifier.input_dims, attack.generator_activation)
            state.generator_params = init_generator(generator_spec, rng)
        train_epochs = attack.train_epochs
        if train_epochs is None:
            train_epochs = config.model.local_epochs
        adversary = cls(attack.kind, classifier, seed,
                        config.model.learning_rate, config.model.batch_size,
                        train_epochs, state, filter_spec, generator_spec,
                        attack.lie_z, attack.perturbation, attack.fang_lambda,
                        logger)
        # DFA-R draws a new label every round unless one is configured
        if attack.kind == 'dfa_r' and attack.poison_label is None:
            adversary._fixed_label = None
        adversary.log.info("adversary %s, poison label %s" % (
            attack.kind, adversary._fixed_label))
        return adversary

    @property
    def data_free(self):
        return self.kind in DATA_FREE_ATTACKS

    def _train(self, context, synth, rng):
        return adversarial_train(
            context.global_params, context.previous_params, synth,
            self.classifier, self.state.reg_weight, self.model_rate,
            self.train_epochs, self.batch_size, rng)

    def craft(self, context, view, shard=None):
        """
        The malicious update of a round

        Returns
        -------
        params : ParamVector
        n_samples : int
            the sample count the malicious clients claim
        """
        rng = np.random.default_rng(np.random.SeedSequence(
            [int(self.seed), STREAM_ATTACK, int(context.round_index)]))
        global_params = np.asarray(context.global_params, dtype=float)
        kind = self.kind

        if kind == 'dfa_r':
            if self._fixed_label is None:
                self.state.poison_label = int(rng.integers(
                    self.classifier.num_classes))
            synth = dfa_r_synthesize(global_params, self.classifier,
                                     self.filter_spec, self.state, rng,
                                     self.log)
            update = self._train(context, synth, rng)
        elif kind == 'dfa_g':
            synth = dfa_g_synthesize(global_params, self.classifier,
                                     self.generator_spec, self.state, rng,
                                     self.log)
            update = self._train(context, synth, rng)
        elif kind == 'real_data':
            poisoned = LabeledBatch(
                shard.images, np.full(len(shard), self.state.poison_label))
            update = self._train(context, poisoned, rng)
        elif kind == 'random':
            update = random_weights_attack(len(global_params), rng,
                                           self.state.samples)
        elif not view.updates:
            self.log.warning("round %d: no benign update to imitate,"
                             " submitting the global model" %
                             context.round_index)
            return global_params.copy(), 1
        elif kind == 'lie':
            update = lie_attack(view, self.lie_z)
        elif kind == 'fang':
            update = fang_attack(view, global_params, self.fang_lambda)
        else:
            update = minmax_attack(view, global_params, self.perturbation,
                                   kind, self.log)
        self.log.debug("round %d: %s update at distance %.4g" % (
            context.round_index, kind,
            np.linalg.norm(update.params - global_params)))
        return update.params, update.n_samples
