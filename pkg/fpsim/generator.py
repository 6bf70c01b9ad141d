"""
.. module:: generator
    :synopsis: Dense generator G(Z) used by DFA-G

Two dense layers map a Gaussian noise vector to an image: noise -> hidden
(tanh or relu) -> image squashed into [0, 1] by the logistic function.
The parameter vector holds W1, b1, W2, b2 in that order.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import RejectedInputError
from .nn import _one_hot, input_loss_and_grad

ACTIVATIONS = ('tanh', 'relu')


@dataclass(frozen=True)
class GeneratorSpec:
    noise_dim: int = 16
    hidden_width: int = 64
    output_dims: tuple = (8, 8, 1)
    activation: str = 'tanh'

    def __post_init__(self):
        object.__setattr__(self, 'output_dims',
                           tuple(int(e) for e in self.output_dims))
        if self.noise_dim < 1 or self.hidden_width < 1:
            raise RejectedInputError("generator widths must be positive")
        if self.activation not in ACTIVATIONS:
            raise RejectedInputError(
                "unknown activation %r" % self.activation)

    @property
    def output_size(self):
        return int(np.prod(self.output_dims))

    @property
    def param_count(self):
        hidden, out = self.hidden_width, self.output_size
        return self.noise_dim * hidden + hidden + hidden * out + out


def init_generator(spec, rng):
    w1 = rng.normal(0.0, 1.0 / np.sqrt(spec.noise_dim),
                    size=spec.noise_dim * spec.hidden_width)
    w2 = rng.normal(0.0, 1.0 / np.sqrt(spec.hidden_width),
                    size=spec.hidden_width * spec.output_size)
    return np.concatenate([w1, np.zeros(spec.hidden_width), w2,
                           np.zeros(spec.output_size)])


def draw_noise(spec, count, seed):
    """The same seed always yields the same noise batch"""
    return np.random.default_rng(seed).standard_normal(
        (count, spec.noise_dim))


def _unpack(theta, spec):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.param_count,):
        raise RejectedInputError(
            "expected %d generator parameters, got shape %s" % (
                spec.param_count, theta.shape))
    nz, hidden, out = spec.noise_dim, spec.hidden_width, spec.output_size
    offset = 0
    w1 = theta[offset:offset + nz * hidden].reshape(nz, hidden)
    offset += nz * hidden
    b1 = theta[offset:offset + hidden]
    offset += hidden
    w2 = theta[offset:offset + hidden * out].reshape(hidden, out)
    offset += hidden * out
    b2 = theta[offset:]
    return w1, b1, w2, b2


def _check_noise(noise, spec):
    noise = np.asarray(noise, dtype=float)
    if noise.ndim != 2 or noise.shape[1] != spec.noise_dim:
        raise RejectedInputError(
            "noise of shape %s, expected (n, %d)" % (noise.shape,
                                                     spec.noise_dim))
    return noise


def _hidden(spec, w1, b1, noise):
    pre = noise @ w1 + b1
    if spec.activation == 'tanh':
        return pre, np.tanh(pre)
    return pre, np.maximum(pre, 0.0)


def generator_forward(theta, spec, noise):
    """Images G(Z) in [0, 1], shape (n,) + output_dims"""
    w1, b1, w2, b2 = _unpack(theta, spec)
    noise = _check_noise(noise, spec)
    _, hidden = _hidden(spec, w1, b1, noise)
    images = expit(hidden @ w2 + b2)
    return images.reshape((len(noise),) + spec.output_dims)


def generator_backward(theta, spec, noise, d_images):
    """Gradient w.r.t. the generator parameters given dL/dG(Z)"""
    w1, b1, w2, b2 = _unpack(theta, spec)
    noise = _check_noise(noise, spec)
    pre, hidden = _hidden(spec, w1, b1, noise)
    out = expit(hidden @ w2 + b2)
    d_out = np.asarray(d_images, dtype=float).reshape(out.shape)
    d_pre2 = d_out * out * (1.0 - out)
    d_hidden = d_pre2 @ w2.T
    if spec.activation == 'tanh':
        d_pre1 = d_hidden * (1.0 - hidden ** 2)
    else:
        d_pre1 = d_hidden * (pre > 0)
    return np.concatenate([(noise.T @ d_pre1).ravel(), d_pre1.sum(axis=0),
                           (hidden.T @ d_pre2).ravel(), d_pre2.sum(axis=0)])


def generator_grads(theta, spec, noise, params, classifier, label):
    """
    Mean cross-entropy between the classifier's prediction on G(Z) and the
    one-hot `label`, with its gradient w.r.t. the generator parameters.
    DFA-G ascends this gradient.
    """
    if spec.output_dims != tuple(classifier.input_dims):
        raise RejectedInputError(
            "generator outputs %s but the classifier reads %s" % (
                spec.output_dims, classifier.input_dims))
    images = generator_forward(theta, spec, noise)
    targets = _one_hot(np.full(len(images), label), classifier.num_classes,
                       float)
    loss, d_images = input_loss_and_grad(params, classifier, images, targets)
    return loss, generator_backward(theta, spec, noise, d_images)
