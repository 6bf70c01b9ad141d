"""
.. module:: conv
    :synopsis: The single convolutional filter layer used by DFA-R

The layer maps a random dummy image A (a x a) to an image B (b x b) that is
then fed to the frozen global classifier. The sizes are tied by

    a = b * (St + 1) - 2P + J

so window origins are read every St + 1 pixels of the padded dummy image,
and the last St + 1 padded rows/columns are never reached.
"""
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, RejectedInputError
from .nn import input_loss_and_grad


@dataclass(frozen=True)
class FilterLayerSpec:
    kernel: int = 3
    stride: int = 1
    padding: int = 0
    output_size: int = 8
    channels: int = 1
    input_size: int = None

    def __post_init__(self):
        if self.kernel < 1 or self.stride < 0 or self.padding < 0:
            raise ConfigurationError(
                "kernel must be positive, stride and padding non-negative",
                'attack.filter_kernel')
        if self.output_size < 1 or self.channels < 1:
            raise ConfigurationError("output size and channels must be"
                                     " positive", 'attack.filter')
        expected = required_input_size(self.output_size, self.kernel,
                                       self.stride, self.padding)
        if self.input_size is None:
            object.__setattr__(self, 'input_size', expected)
        if self.input_size != expected:
            raise ConfigurationError(
                "input size %d violates a = b(St+1) - 2P + J = %d" % (
                    self.input_size, expected), 'attack.filter')
        if self.input_size < 1 or self.input_size + 2 * self.padding < \
                self.kernel:
            raise ConfigurationError(
                "padded dummy image is smaller than the kernel",
                'attack.filter_padding')

    @property
    def step(self):
        return self.stride + 1

    @property
    def param_count(self):
        return self.kernel * self.kernel * self.channels ** 2 + self.channels


def required_input_size(output_size, kernel, stride, padding):
    return output_size * (stride + 1) - 2 * padding + kernel


def init_filter(spec, rng):
    """
    A per-channel box blur plus small Gaussian noise, so that the first
    images B stay close to the [0, 1] range of the dummy images
    """
    area = spec.kernel * spec.kernel
    kernel = np.zeros((spec.kernel, spec.kernel, spec.channels,
                       spec.channels))
    for channel in range(spec.channels):
        kernel[:, :, channel, channel] = 1.0 / area
    kernel += rng.normal(0.0, 0.1 / area, size=kernel.shape)
    return np.concatenate([kernel.ravel(), np.zeros(spec.channels)])


def _unpack(fparams, spec):
    fparams = np.asarray(fparams, dtype=float)
    if fparams.shape != (spec.param_count,):
        raise RejectedInputError(
            "expected %d filter parameters, got shape %s" % (
                spec.param_count, fparams.shape))
    split = spec.param_count - spec.channels
    kernel = fparams[:split].reshape(spec.kernel, spec.kernel,
                                     spec.channels, spec.channels)
    return kernel, fparams[split:]


def _windows(spec, dummy):
    """Receptive fields of every output pixel, shape (b, b, c, J, J)"""
    dummy = np.asarray(dummy, dtype=float)
    if dummy.shape != (spec.input_size, spec.input_size, spec.channels):
        raise RejectedInputError(
            "dummy image of shape %s, expected %s" % (
                dummy.shape,
                (spec.input_size, spec.input_size, spec.channels)))
    pad = spec.padding
    padded = np.pad(dummy, ((pad, pad), (pad, pad), (0, 0)))
    windows = sliding_window_view(padded, (spec.kernel, spec.kernel),
                                  axis=(0, 1))
    size = spec.output_size
    return windows[::spec.step, ::spec.step][:size, :size]


def filter_forward(fparams, spec, dummy):
    """Image B = filter(A), shape (b, b, channels)"""
    kernel, bias = _unpack(fparams, spec)
    return np.einsum('xycuv,uvco->xyo', _windows(spec, dummy), kernel) + bias


def filter_backward(fparams, spec, dummy, d_image):
    """Gradient w.r.t. the filter parameters given dL/dB"""
    _unpack(fparams, spec)
    d_image = np.asarray(d_image, dtype=float)
    d_kernel = np.einsum('xycuv,xyo->uvco', _windows(spec, dummy), d_image)
    return np.concatenate([d_kernel.ravel(), d_image.sum(axis=(0, 1))])


def filter_grads(fparams, spec, dummy, params, classifier, target_dist):
    """
    Cross-entropy between the classifier's prediction on filter(A) and
    `target_dist`, with its gradient w.r.t. the filter parameters.
    Classifier parameters and the dummy image are frozen.
    """
    expected = (spec.output_size, spec.output_size, spec.channels)
    if tuple(classifier.input_dims) != expected:
        raise RejectedInputError(
            "filter outputs %s but the classifier reads %s" % (
                expected, classifier.input_dims))
    image = filter_forward(fparams, spec, dummy)
    loss, d_images = input_loss_and_grad(
        params, classifier, image[np.newaxis],
        np.asarray(target_dist, dtype=float)[np.newaxis])
    return loss, filter_backward(fparams, spec, dummy, d_images[0])
