"""finite-difference checks of every analytic gradient"""
import numpy as np
import pytest

from ..conv import FilterLayerSpec, filter_forward, filter_grads, init_filter
from ..generator import (GeneratorSpec, generator_forward, generator_grads,
                         init_generator)
from ..nn import (ClassifierSpec, init_params, input_grad,
                  input_loss_and_grad, loss_and_grad)
from .custom_fixtures import finite_difference, random_batch, relative_error

SEEDS = range(20)
TOLERANCE = 1e-4
FLOAT32_TOLERANCE = 1e-2


@pytest.mark.parametrize('seed', SEEDS)
def test_classifier_gradient(seed):
    rng = np.random.default_rng(seed)
    spec = ClassifierSpec((3, 3, 1), (4,), 3)
    params = init_params(spec, rng, 0.5)
    batch = random_batch(rng, spec, 5)

    _, grad = loss_and_grad(params, spec, batch)
    numeric = finite_difference(
        lambda w: loss_and_grad(w, spec, batch)[0], params)
    assert relative_error(grad, numeric) < TOLERANCE


@pytest.mark.parametrize('seed', SEEDS)
def test_input_gradient(seed):
    rng = np.random.default_rng(100 + seed)
    spec = ClassifierSpec((3, 3, 1), (4,), 3)
    params = init_params(spec, rng, 0.5)
    image = rng.random(spec.input_dims)
    target = rng.dirichlet(np.ones(spec.num_classes))

    grad = input_grad(params, spec, image, target)
    numeric = finite_difference(
        lambda x: input_loss_and_grad(params, spec, x[np.newaxis],
                                      target[np.newaxis])[0], image)
    assert grad.shape == image.shape
    assert relative_error(grad, numeric) < TOLERANCE


@pytest.mark.parametrize('seed', SEEDS)
def test_filter_gradient(seed):
    rng = np.random.default_rng(200 + seed)
    filter_spec = FilterLayerSpec(kernel=3, stride=1, padding=0,
                                  output_size=4)
    spec = ClassifierSpec((4, 4, 1), (4,), 3)
    params = init_params(spec, rng, 0.5)
    fparams = init_filter(filter_spec, rng) + rng.normal(
        0, 0.1, filter_spec.param_count)
    dummy = rng.random((filter_spec.input_size, filter_spec.input_size, 1))
    target = rng.dirichlet(np.ones(spec.num_classes))

    _, grad = filter_grads(fparams, filter_spec, dummy, params, spec, target)
    numeric = finite_difference(
        lambda theta: filter_grads(theta, filter_spec, dummy, params, spec,
                                   target)[0], fparams)
    assert relative_error(grad, numeric) < TOLERANCE


@pytest.mark.parametrize('seed', SEEDS)
def test_generator_gradient(seed):
    rng = np.random.default_rng(300 + seed)
    spec = ClassifierSpec((3, 3, 1), (), 3)
    params = init_params(spec, rng, 0.5)
    gen_spec = GeneratorSpec(noise_dim=3, hidden_width=4,
                             output_dims=(3, 3, 1))
    theta = init_generator(gen_spec, rng)
    noise = rng.standard_normal((4, gen_spec.noise_dim))

    _, grad = generator_grads(theta, gen_spec, noise, params, spec, 1)
    numeric = finite_difference(
        lambda t: generator_grads(t, gen_spec, noise, params, spec, 1)[0],
        theta)
    assert relative_error(grad, numeric) < TOLERANCE


def test_filter_size_relation():
    assert FilterLayerSpec(3, 1, 0, 4).input_size == 11


def test_zero_kernel_gives_black_image():
    spec = FilterLayerSpec(3, 1, 0, 4)
    image = filter_forward(np.zeros(spec.param_count), spec,
                           np.random.default_rng(0).random((11, 11, 1)))
    assert image.shape == (4, 4, 1)
    assert not image.any()


def test_generator_zero_theta_is_mid_grey():
    spec = GeneratorSpec(3, 4, (3, 3, 1))
    noise = np.random.default_rng(0).standard_normal((2, 3))
    images = generator_forward(np.zeros(spec.param_count), spec, noise)
    np.testing.assert_array_equal(images, np.full((2, 3, 3, 1), 0.5))


@pytest.mark.parametrize('seed', SEEDS)
def test_float32_classifier_gradient(seed):
    rng = np.random.default_rng(400 + seed)
    spec = ClassifierSpec((3, 3, 1), (4,), 3)
    params = init_params(spec, rng, 0.5, dtype=np.float32)
    batch = random_batch(rng, spec, 5)

    _, grad = loss_and_grad(params, spec, batch)
    numeric = finite_difference(
        lambda w: loss_and_grad(w.astype(np.float32), spec, batch)[0],
        params, h=1e-2)
    assert grad.dtype == np.float32
    assert relative_error(grad, numeric) < FLOAT32_TOLERANCE
