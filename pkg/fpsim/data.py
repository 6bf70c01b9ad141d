"""
.. module:: data
    :synopsis: Datasets, IDX parsing and client partitioning

Images are stored as (n, side, side, channels) float arrays in [0, 1].
"""
import gzip
import struct
from dataclasses import dataclass

import numpy as np
from scipy.stats import entropy

from .constants import IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC, STREAM_DATA
from .errors import (BadMagicError, ConfigurationError, CountMismatchError,
                     TruncatedFileError)
from .logger import get_logger
from .nn import LabeledBatch

# Sub-streams of STREAM_DATA
_BLOBS, _SUBSAMPLE, _PARTITION, _REFERENCE = range(4)


def _stream(seed, tag):
    return np.random.default_rng(np.random.SeedSequence(
        [int(seed), STREAM_DATA, tag]))


@dataclass
class Dataset:
    train: LabeledBatch
    test: LabeledBatch
    num_classes: int
    name: str = 'dataset'

    def __post_init__(self):
        for split_name in ('train', 'test'):
            split = getattr(self, split_name)
            if len(split) == 0:
                raise ConfigurationError("the %s split is empty" % split_name,
                                         'dataset')
            if split.labels.min() < 0 or \
                    split.labels.max() >= self.num_classes:
                raise ConfigurationError(
                    "%s labels outside [0, %d)" % (split_name,
                                                   self.num_classes),
                    'dataset.classes')

    @property
    def image_dims(self):
        return tuple(self.train.images.shape[1:])


@dataclass
class Partition:
    """`assignment[i]` holds the train indices owned by client i"""
    assignment: tuple
    beta: object

    def __len__(self):
        return len(self.assignment)

    @property
    def sizes(self):
        return np.array([len(indices) for indices in self.assignment],
                        dtype=np.int64)

    def client_batch(self, dataset, client_id):
        return dataset.train.subset(self.assignment[client_id])


@dataclass
class ReferenceSet:
    """The server's small, class-balanced dataset D_r"""
    batch: LabeledBatch

    def __len__(self):
        return len(self.batch)


def _open(path):
    if str(path).endswith('.gz'):
        return gzip.open(path, 'rb')
    return open(path, 'rb')


def _read_header(blob, path, magic, fields):
    size = 4 * (fields + 1)
    if len(blob) < size:
        raise TruncatedFileError("header needs %d bytes" % size, path,
                                 len(blob))
    values = struct.unpack('>%dI' % (fields + 1), blob[:size])
    if values[0] != magic:
        raise BadMagicError("bad magic 0x%08x, expected 0x%08x" % (
            values[0], magic), path, 0)
    return values[1:], size


def load_idx(images_path, labels_path):
    """
    Parse an IDX image file and its IDX label file

    Both files are big-endian. The images file is magic 0x00000803, the
    count, the rows and the columns, then the pixels as unsigned bytes; the
    labels file is magic 0x00000801, the count, then one byte per label.
    Files ending in ``.gz`` are decompressed on the fly.
    """
    with _open(images_path) as stream:
        images_blob = stream.read()
    with _open(labels_path) as stream:
        labels_blob = stream.read()

    (count, rows, cols), offset = _read_header(
        images_blob, images_path, IDX_IMAGES_MAGIC, 3)
    end = offset + count * rows * cols
    if len(images_blob) < end:
        raise TruncatedFileError(
            "expected %d pixel bytes" % (count * rows * cols), images_path,
            len(images_blob))
    images = np.frombuffer(images_blob, dtype=np.uint8, count=end - offset,
                           offset=offset)

    (label_count, ), label_offset = _read_header(
        labels_blob, labels_path, IDX_LABELS_MAGIC, 1)
    if label_count != count:
        raise CountMismatchError(
            "%d labels for %d images" % (label_count, count), labels_path, 4)
    if len(labels_blob) < label_offset + label_count:
        raise TruncatedFileError("expected %d label bytes" % label_count,
                                 labels_path, len(labels_blob))
    labels = np.frombuffer(labels_blob, dtype=np.uint8, count=label_count,
                           offset=label_offset)

    images = images.reshape(count, rows, cols, 1).astype(np.float64) / 255.0
    return LabeledBatch(images, labels.astype(np.int64))


def make_blobs(num_classes, per_class, side, seed, test_per_class=None,
               noise=0.25, channels=1):
    """
    Gaussian clouds around one binary template per class

    Templates are random {0, 1} images, so two classes differ on about half
    of their pixels and the classes are linearly separable for moderate
    `noise`. Pixels are clipped to [0, 1].
    """
    if num_classes < 2:
        raise ConfigurationError("blobs need at least 2 classes",
                                 'dataset.classes')
    if test_per_class is None:
        test_per_class = max(1, per_class // 2)
    rng = _stream(seed, _BLOBS)
    dims = (side, side, channels)
    templates = (rng.random((num_classes,) + dims) < 0.5).astype(float)

    def draw(count):
        labels = np.repeat(np.arange(num_classes), count)
        order = rng.permutation(len(labels))
        labels = labels[order]
        images = templates[labels] + noise * rng.standard_normal(
            (len(labels),) + dims)
        return LabeledBatch(np.clip(images, 0.0, 1.0), labels)

    return Dataset(draw(per_class), draw(test_per_class), num_classes,
                   'blobs')


def subsample(batch, fraction, seed):
    """Uniform random subset of `fraction` of the batch, order preserved"""
    if not 0 < fraction <= 1:
        raise ConfigurationError("fraction must lie in (0, 1]",
                                 'dataset.subsample')
    if fraction == 1:
        return batch
    count = max(1, int(round(fraction * len(batch))))
    rng = _stream(seed, _SUBSAMPLE)
    indices = np.sort(rng.choice(len(batch), size=count, replace=False))
    return batch.subset(indices)


def load_dataset(section, seed, logger=None):
    """Build the dataset described by a `dataset` configuration section"""
    log = get_logger(logger)
    if section.name == 'blobs':
        dataset = make_blobs(section.classes, section.per_class,
                             section.image_side, seed,
                             section.test_per_class, section.noise)
    else:
        train = load_idx(section.train_images, section.train_labels)
        test = load_idx(section.test_images, section.test_labels)
        log.info("read %d train and %d test images from IDX files" % (
            len(train), len(test)))
        train = subsample(train, section.subsample, seed)
        dataset = Dataset(train, test, section.classes, section.name)
    log.info("dataset %s: %d train, %d test, %d classes" % (
        dataset.name, len(dataset.train), len(dataset.test),
        dataset.num_classes))
    return dataset


def _largest_remainder(proportions, total):
    """Integer counts summing to `total`, ties going to the lowest index"""
    raw = proportions * total
    counts = np.floor(raw).astype(np.int64)
    missing = total - counts.sum()
    order = np.argsort(-(raw - counts), kind='stable')
    counts[order[:missing]] += 1
    return counts


def _check_clients(num_clients):
    if num_clients < 1:
        raise ConfigurationError("at least one client is needed",
                                 'experiment.clients')


def dirichlet_partition(dataset, num_clients, beta, seed):
    """
    Split the train indices class by class: the share of class c owned by
    each client is drawn from Dirichlet(beta, ..., beta)
    """
    _check_clients(num_clients)
    if not beta > 0:
        raise ConfigurationError("beta must be positive", 'dataset.beta')
    rng = _stream(seed, _PARTITION)
    labels = dataset.train.labels
    owned = [[] for _ in range(num_clients)]
    for label in range(dataset.num_classes):
        indices = rng.permutation(np.flatnonzero(labels == label))
        proportions = rng.dirichlet(np.full(num_clients, float(beta)))
        counts = _largest_remainder(proportions, len(indices))
        for client, chunk in enumerate(
                np.split(indices, np.cumsum(counts)[:-1])):
            owned[client].append(chunk)
    return Partition(tuple(np.sort(np.concatenate(chunks))
                           for chunks in owned), float(beta))


def iid_partition(dataset, num_clients, seed):
    """Deal every class round-robin over the clients"""
    _check_clients(num_clients)
    rng = _stream(seed, _PARTITION)
    labels = dataset.train.labels
    owned = [[] for _ in range(num_clients)]
    start = 0
    for label in range(dataset.num_classes):
        indices = rng.permutation(np.flatnonzero(labels == label))
        for position, index in enumerate(indices):
            owned[(start + position) % num_clients].append(index)
        start = (start + len(indices)) % num_clients
    return Partition(tuple(np.sort(np.array(indices, dtype=np.int64))
                           for indices in owned), 'iid')


def partition_dataset(dataset, num_clients, beta, seed):
    """Dirichlet partition, or the i.i.d. one when `beta` is 'iid'"""
    if beta == 'iid':
        return iid_partition(dataset, num_clients, seed)
    return dirichlet_partition(dataset, num_clients, beta, seed)


def make_reference_set(dataset, size, seed):
    """
    Draw a class-balanced reference set from the test split

    Each class gets size // L samples, and the size % L remaining ones go
    to the lowest class labels.
    """
    classes = dataset.num_classes
    if size < 1 or size > len(dataset.test):
        raise ConfigurationError(
            "reference size %d outside [1, %d]" % (size, len(dataset.test)),
            'dataset.reference_size')
    quotas = np.full(classes, size // classes)
    quotas[:size % classes] += 1
    rng = _stream(seed, _REFERENCE)
    labels = dataset.test.labels
    chosen = []
    for label in range(classes):
        pool = np.flatnonzero(labels == label)
        if len(pool) < quotas[label]:
            raise ConfigurationError(
                "class %d has %d test samples, %d needed" % (
                    label, len(pool), quotas[label]),
                'dataset.reference_size')
        chosen.append(rng.choice(pool, size=quotas[label], replace=False))
    return ReferenceSet(dataset.test.subset(np.sort(np.concatenate(chosen))))


def class_histograms(dataset, partition):
    """(clients x classes) matrix of sample counts"""
    labels = dataset.train.labels
    return np.array([np.bincount(labels[indices],
                                 minlength=dataset.num_classes)
                     for indices in partition.assignment], dtype=np.int64)


def mean_client_entropy(histograms):
    """Mean entropy (nats) of the class distribution of non-empty clients"""
    histograms = np.asarray(histograms, dtype=float)
    filled = histograms[histograms.sum(axis=1) > 0]
    if len(filled) == 0:
        return 0.0
    return float(np.mean(entropy(filled, axis=1)))
