"""tests for the dense classifier"""
import math

import numpy as np
import pytest

from ..data import make_blobs
from ..errors import NumericalFailureError, RejectedInputError
from ..federation import local_train
from ..nn import (ClassifierSpec, LabeledBatch, accuracy, forward,
                  init_params, input_grad, loss_and_grad, sgd_step)
from .custom_fixtures import random_batch


def test_zero_params_predict_uniform():
    spec = ClassifierSpec((4, 4, 1), (), 5)
    images = np.random.default_rng(0).random((3, 4, 4, 1))
    probabilities = forward(np.zeros(spec.param_count), spec, images)
    np.testing.assert_allclose(probabilities, np.full((3, 5), 0.2))


def test_empty_batch():
    spec = ClassifierSpec((4, 4, 1), (3,), 5)
    assert forward(np.zeros(spec.param_count), spec,
                   np.zeros((0, 4, 4, 1))).shape == (0, 5)


def test_rows_are_simplices():
    rng = np.random.default_rng(1)
    spec = ClassifierSpec((5, 5, 1), (7,), 4)
    params = init_params(spec, rng, 2.0)
    probabilities = forward(params, spec, rng.random((20, 5, 5, 1)))
    assert np.all(probabilities >= 0)
    assert np.max(np.abs(probabilities.sum(axis=1) - 1)) < 1e-9


def test_dimension_mismatch():
    spec = ClassifierSpec((4, 4, 1), (), 3)
    with pytest.raises(RejectedInputError):
        forward(np.zeros(spec.param_count + 1), spec, np.zeros((1, 4, 4, 1)))
    with pytest.raises(RejectedInputError):
        forward(np.zeros(spec.param_count), spec, np.zeros((1, 5, 5, 1)))


def test_uniform_loss_is_log_classes():
    spec = ClassifierSpec((2, 2, 1), (), 7)
    batch = LabeledBatch(np.ones((1, 2, 2, 1)), [3])
    loss, grad = loss_and_grad(np.zeros(spec.param_count), spec, batch)
    assert loss == pytest.approx(math.log(7))
    assert grad.shape == (spec.param_count,)


def test_saturated_prediction_has_vanishing_loss():
    spec = ClassifierSpec((1, 1, 1), (), 2)
    # weights (1 x 2), then the biases
    params = np.array([0.0, 0.0, 50.0, -50.0])
    loss, grad = loss_and_grad(params, spec,
                               LabeledBatch(np.ones((1, 1, 1, 1)), [0]))
    assert loss < 1e-12
    assert np.linalg.norm(grad) < 1e-12


def test_non_finite_parameter_is_located():
    spec = ClassifierSpec((2, 2, 1), (), 3)
    params = np.zeros(spec.param_count)
    params[5] = np.nan
    batch = random_batch(np.random.default_rng(0), spec, 2)
    with pytest.raises(NumericalFailureError) as info:
        loss_and_grad(params, spec, batch)
    assert info.value.parameter_index == 5


def test_input_grad_of_constant_model_is_zero():
    spec = ClassifierSpec((3, 3, 1), (), 4)
    grad = input_grad(np.zeros(spec.param_count), spec,
                      np.full((3, 3, 1), 0.3), [0.1, 0.2, 0.3, 0.4])
    assert grad.shape == (3, 3, 1)
    assert not grad.any()


def test_input_grad_rejects_non_simplex():
    spec = ClassifierSpec((3, 3, 1), (), 4)
    with pytest.raises(RejectedInputError):
        input_grad(np.zeros(spec.param_count), spec, np.zeros((3, 3, 1)),
                   [0.5, 0.5, 0.5, 0.5])


def test_sgd_step():
    np.testing.assert_array_equal(
        sgd_step(np.array([1.0, 1.0]), np.array([1.0, -1.0]), 0.5),
        [0.5, 1.5])
    params = np.array([0.3, -2.0])
    np.testing.assert_array_equal(sgd_step(params, np.zeros(2), 0.1), params)
    np.testing.assert_array_equal(sgd_step(params, np.ones(2), 0.0), params)


def test_separable_training_converges():
    dataset = make_blobs(2, 20, 6, seed=4, noise=0.1)
    spec = ClassifierSpec(dataset.image_dims, (), 2)
    params = np.zeros(spec.param_count)
    for _ in range(200):
        _, grad = loss_and_grad(params, spec, dataset.train)
        params = sgd_step(params, grad, 0.2)
    loss, _ = loss_and_grad(params, spec, dataset.train)
    assert loss < 0.1


def test_blobs_are_learnable():
    dataset = make_blobs(10, 50, 8, seed=5)
    spec = ClassifierSpec(dataset.image_dims, (), 10)
    update = local_train(np.zeros(spec.param_count), spec, dataset.train,
                         0.1, 200)
    assert accuracy(update.params, spec, dataset.test) > 0.9


def test_float32_models():
    spec = ClassifierSpec((3, 3, 1), (4,), 3)
    params = init_params(spec, np.random.default_rng(0), dtype=np.float32)
    assert params.dtype == np.float32
    batch = random_batch(np.random.default_rng(1), spec, 4)
    _, grad = loss_and_grad(params, spec, batch)
    assert grad.dtype == np.float32
