"""
.. module:: nn
    :synopsis: Dense classifier with explicit forward and backward passes

A model is a flat parameter vector (a 1-d numpy array, called a ParamVector
throughout the package) plus a :class:`ClassifierSpec` describing how to
read it. Layer `l` stores its weight matrix `W_l` (fan_in x fan_out,
row-major) followed by its bias `b_l`. Hidden layers use tanh, the output
layer is a softmax.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, softmax

from .errors import NumericalFailureError, RejectedInputError

# Tolerance used when checking that a target distribution is a simplex
SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class ClassifierSpec:
    """Architecture of the classifier: images of `input_dims` to L classes"""
    input_dims: tuple = (8, 8, 1)
    hidden_widths: tuple = ()
    num_classes: int = 10

    def __post_init__(self):
        object.__setattr__(self, 'input_dims',
                           tuple(int(e) for e in self.input_dims))
        object.__setattr__(self, 'hidden_widths',
                           tuple(int(e) for e in self.hidden_widths))
        if len(self.input_dims) != 3 or min(self.input_dims) < 1:
            raise RejectedInputError(
                "input dims must be (height, width, channels), all positive,"
                " got %s" % (self.input_dims,))
        if any(width < 0 for width in self.hidden_widths):
            raise RejectedInputError("hidden widths must be non-negative")
        if self.num_classes < 2:
            raise RejectedInputError("a classifier needs at least 2 classes")

    @property
    def input_size(self):
        return int(np.prod(self.input_dims))

    @property
    def layer_shapes(self):
        widths = [self.input_size] + list(self.hidden_widths) + [
            self.num_classes]
        return list(zip(widths[:-1], widths[1:]))

    @property
    def param_count(self):
        return sum(fan_in * fan_out + fan_out
                   for fan_in, fan_out in self.layer_shapes)


@dataclass
class LabeledBatch:
    """Images in [0, 1] of shape (n, height, width, channels) and labels"""
    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if len(self.images) != len(self.labels):
            raise RejectedInputError(
                "%d images but %d labels" % (len(self.images),
                                             len(self.labels)))

    def __len__(self):
        return len(self.labels)

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledBatch(self.images[indices], self.labels[indices])


def init_params(spec, rng, scale=None, dtype=np.float64):
    """
    Draw initial parameters

    Weights are Gaussian with standard deviation `scale` (Xavier,
    1/sqrt(fan_in), when `scale` is None), biases start at zero.
    """
    chunks = []
    for fan_in, fan_out in spec.layer_shapes:
        std = scale if scale is not None else 1.0 / np.sqrt(max(fan_in, 1))
        chunks.append(rng.normal(0.0, std, size=fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return np.concatenate(chunks).astype(dtype)


def _check_params(params, spec):
    params = np.asarray(params)
    if params.ndim != 1 or params.shape[0] != spec.param_count:
        raise RejectedInputError(
            "expected %d parameters, got shape %s" % (spec.param_count,
                                                      params.shape))
    if not np.issubdtype(params.dtype, np.floating):
        params = params.astype(np.float64)
    return params


def _first_non_finite(values):
    bad = np.flatnonzero(~np.isfinite(values))
    return int(bad[0]) if len(bad) else -1


def _unpack(params, spec):
    """Split the flat vector into (W, b) views, one pair per layer"""
    layers = []
    offset = 0
    for fan_in, fan_out in spec.layer_shapes:
        weights = params[offset:offset + fan_in * fan_out].reshape(
            fan_in, fan_out)
        offset += fan_in * fan_out
        bias = params[offset:offset + fan_out]
        offset += fan_out
        layers.append((weights, bias))
    return layers


def _pack(grads):
    return np.concatenate([np.concatenate([dw.ravel(), db])
                           for dw, db in grads])


def _flatten_images(images, spec, dtype):
    images = np.asarray(images, dtype=dtype)
    if images.size == 0:
        return np.zeros((0, spec.input_size), dtype=dtype)
    if images.ndim == 4 and images.shape[1:] == spec.input_dims:
        return images.reshape(len(images), -1)
    if images.ndim == 2 and images.shape[1] == spec.input_size:
        return images
    raise RejectedInputError(
        "images of shape %s do not match input dims %s" % (
            images.shape, spec.input_dims))


def _forward_cache(layers, x):
    """Return the logits and the input of every layer"""
    inputs = []
    hidden = x
    for index, (weights, bias) in enumerate(layers):
        inputs.append(hidden)
        z = hidden @ weights + bias
        if index < len(layers) - 1:
            hidden = np.tanh(z)
        else:
            return z, inputs


def _backward(layers, inputs, dlogits):
    """Propagate dL/dlogits back, returning (param grads, dL/dx)"""
    grads = [None] * len(layers)
    delta = dlogits
    for index in range(len(layers) - 1, -1, -1):
        weights, _ = layers[index]
        layer_input = inputs[index]
        grads[index] = (layer_input.T @ delta, delta.sum(axis=0))
        delta = delta @ weights.T
        if index > 0:
            # layer_input is tanh(z) of the previous layer
            delta = delta * (1.0 - layer_input ** 2)
    return grads, delta


def _soft_cross_entropy(logits, targets):
    """Mean cross-entropy against target distributions, and its gradient"""
    count = len(logits)
    log_probs = log_softmax(logits, axis=1)
    loss = -np.sum(targets * log_probs) / count
    dlogits = (np.exp(log_probs) - targets) / count
    return loss, dlogits


def _one_hot(labels, num_classes, dtype):
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) and (labels.min() < 0 or labels.max() >= num_classes):
        raise RejectedInputError(
            "labels must lie in [0, %d)" % num_classes)
    targets = np.zeros((len(labels), num_classes), dtype=dtype)
    targets[np.arange(len(labels)), labels] = 1.0
    return targets


def _raise_if_non_finite(params, loss):
    if not np.isfinite(loss):
        index = _first_non_finite(params)
        if index < 0:
            # finite parameters overflowed: blame the largest one
            index = int(np.argmax(np.abs(params)))
        raise NumericalFailureError("non-finite loss in forward pass",
                                    parameter_index=index)


def forward(params, spec, images):
    """Per-class probabilities, one row per image"""
    params = _check_params(params, spec)
    x = _flatten_images(images, spec, params.dtype)
    if len(x) == 0:
        return np.zeros((0, spec.num_classes), dtype=params.dtype)
    logits, _ = _forward_cache(_unpack(params, spec), x)
    return softmax(logits, axis=1)


def predict(params, spec, images):
    return np.argmax(forward(params, spec, images), axis=1)


def accuracy(params, spec, batch):
    """Fraction of correctly classified samples of `batch`"""
    if len(batch) == 0:
        return 0.0
    return float(np.mean(predict(params, spec, batch.images) ==
                         batch.labels))


def loss_and_grad(params, spec, batch):
    """
    Mean cross-entropy of `batch` and its gradient w.r.t. the parameters

    Returns
    -------
    loss : float
    grad : ParamVector, same length as params
    """
    params = _check_params(params, spec)
    if len(batch) == 0:
        raise RejectedInputError("cannot compute a loss on an empty batch")
    index = _first_non_finite(params)
    if index >= 0:
        raise NumericalFailureError("non-finite parameter",
                                    parameter_index=index)
    x = _flatten_images(batch.images, spec, params.dtype)
    targets = _one_hot(batch.labels, spec.num_classes, params.dtype)
    layers = _unpack(params, spec)
    logits, inputs = _forward_cache(layers, x)
    loss, dlogits = _soft_cross_entropy(logits, targets)
    _raise_if_non_finite(params, loss)
    grads, _ = _backward(layers, inputs, dlogits)
    return float(loss), _pack(grads)


def check_simplex(target_dist, num_classes):
    target_dist = np.asarray(target_dist, dtype=float)
    if (target_dist.shape[-1] != num_classes or np.any(target_dist < 0) or
            np.any(np.abs(target_dist.sum(axis=-1) - 1.0) > SIMPLEX_TOL)):
        raise RejectedInputError(
            "target distribution is not a probability simplex over %d"
            " classes" % num_classes)
    return target_dist


def input_loss_and_grad(params, spec, images, targets):
    """
    Mean cross-entropy of a batch of images against target distributions,
    and its gradient w.r.t. the images (the model stays frozen)
    """
    params = _check_params(params, spec)
    images = np.asarray(images, dtype=params.dtype)
    x = _flatten_images(images, spec, params.dtype)
    targets = np.broadcast_to(np.asarray(targets, dtype=params.dtype),
                              (len(x), spec.num_classes))
    layers = _unpack(params, spec)
    logits, inputs = _forward_cache(layers, x)
    loss, dlogits = _soft_cross_entropy(logits, targets)
    _raise_if_non_finite(params, loss)
    _, dx = _backward(layers, inputs, dlogits)
    return float(loss), dx.reshape(images.shape)


def input_grad(params, spec, image, target_dist):
    """Gradient of CE(forward(image), target_dist) w.r.t. a single image"""
    target_dist = check_simplex(target_dist, spec.num_classes)
    image = np.asarray(image, dtype=float)
    if image.shape != spec.input_dims:
        raise RejectedInputError(
            "image of shape %s does not match %s" % (image.shape,
                                                     spec.input_dims))
    _, grad = input_loss_and_grad(params, spec, image[np.newaxis],
                                  target_dist[np.newaxis])
    return grad[0]


def sgd_step(params, grad, eta):
    """w - eta * grad, nothing else"""
    params = np.asarray(params)
    grad = np.asarray(grad)
    if params.shape != grad.shape:
        raise RejectedInputError(
            "parameter shape %s and gradient shape %s differ" % (
                params.shape, grad.shape))
    if eta < 0:
        raise RejectedInputError("learning rate must be non-negative")
    return params - eta * grad
