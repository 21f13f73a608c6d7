import math

import numpy as np
import pytest

from app.core.exceptions import DimensionError, EmptyDataset, InvalidArchitecture, InvalidArgument
from app.models.schemas import Activation, NetworkDocument, TrainConfig
from app.nn import (
    Network,
    backward_mse,
    forward,
    init_network,
    mse_loss,
    network_from_document,
    network_from_json,
    network_to_document,
    network_to_json,
    train,
    train_epoch,
)

ACTIVATIONS = [Activation.TANH, Activation.SIGMOID, Activation.IDENTITY]


def _loss(net, x, target):
    out = forward(net, x)[-1]
    return float(np.mean((out - target) ** 2))


def _numeric_gradient(net, x, target, eps=1e-6):
    base = net.parameter_vector()
    grad = np.zeros_like(base)
    for i in range(base.size):
        shifted = base.copy()
        shifted[i] = base[i] + eps
        net.load_parameter_vector(shifted)
        plus = _loss(net, x, target)
        shifted[i] = base[i] - eps
        net.load_parameter_vector(shifted)
        minus = _loss(net, x, target)
        grad[i] = (plus - minus) / (2 * eps)
    net.load_parameter_vector(base)
    return grad


def _flatten(grads):
    return np.concatenate([np.concatenate([g.weights.ravel(), g.biases]) for g in grads])


def test_init_is_deterministic_per_seed():
    a = init_network([6, 3, 6], [Activation.TANH, Activation.SIGMOID], seed=5)
    b = init_network([6, 3, 6], [Activation.TANH, Activation.SIGMOID], seed=5)
    c = init_network([6, 3, 6], [Activation.TANH, Activation.SIGMOID], seed=6)
    assert np.array_equal(a.parameter_vector(), b.parameter_vector())
    assert not np.array_equal(a.parameter_vector(), c.parameter_vector())


def test_init_uses_glorot_bounds_and_zero_biases():
    net = init_network([10, 4, 10], [Activation.TANH, Activation.SIGMOID], seed=0)
    for layer in net.layers:
        fan_out, fan_in = layer.weight.shape
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        assert float(layer.weight.abs().max()) <= bound
        assert float(layer.bias.abs().max()) == 0.0


@pytest.mark.parametrize("sizes,activations", [
    ([4], []),
    ([4, 2], []),
    ([4, 0, 4], [Activation.TANH, Activation.SIGMOID]),
])
def test_invalid_architectures(sizes, activations):
    with pytest.raises(InvalidArchitecture):
        Network(sizes, activations)


def test_forward_returns_every_layer():
    net = init_network([5, 3, 2, 5], [Activation.TANH, Activation.TANH, Activation.SIGMOID], seed=1)
    outputs = forward(net, np.linspace(0, 1, 5))
    assert [o.shape[0] for o in outputs] == [3, 2, 5]
    assert np.all((outputs[-1] > 0) & (outputs[-1] < 1))


def test_forward_rejects_bad_input():
    net = init_network([3, 3], [Activation.IDENTITY], seed=0)
    with pytest.raises(DimensionError):
        forward(net, np.zeros(4))
    with pytest.raises(InvalidArgument):
        forward(net, np.array([0.0, np.nan, 1.0]))


def test_gradients_match_central_differences():
    rng = np.random.default_rng(2024)
    for trial in range(50):
        depth = int(rng.integers(1, 4))
        sizes = [int(s) for s in rng.integers(1, 4, size=depth + 1)]
        activations = [ACTIVATIONS[int(i)] for i in rng.integers(0, 3, size=depth)]
        net = init_network(sizes, activations, seed=trial)
        n_params = net.parameter_vector().size
        assert n_params <= 50

        # non-zero biases so every gradient path is exercised
        net.load_parameter_vector(rng.normal(scale=0.5, size=n_params))
        x = rng.uniform(-1, 1, size=sizes[0])
        target = rng.uniform(0, 1, size=sizes[-1])

        analytic = _flatten(backward_mse(net, x, target))
        numeric = _numeric_gradient(net, x, target)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-8)


def test_backward_checks_target_length():
    net = init_network([3, 2], [Activation.SIGMOID], seed=0)
    with pytest.raises(DimensionError):
        backward_mse(net, np.zeros(3), np.zeros(3))


def test_training_reduces_reconstruction_loss(rng):
    data = rng.uniform(0.2, 0.8, size=(256, 6))
    data[:, 3:] = data[:, :3]
    net = init_network([6, 3, 6], [Activation.TANH, Activation.SIGMOID], seed=3)
    before = mse_loss(net, data)
    history = train(net, data, TrainConfig(learning_rate=0.5, epochs=15, batch_size=16, seed=3))
    assert len(history) == 15
    assert mse_loss(net, data) < before
    assert history[-1] < history[0]


def test_train_epoch_is_deterministic(rng):
    data = rng.uniform(size=(64, 4))
    cfg = TrainConfig(learning_rate=0.1, epochs=1, batch_size=8, seed=9)
    a = init_network([4, 2, 4], [Activation.TANH, Activation.SIGMOID], seed=1)
    b = init_network([4, 2, 4], [Activation.TANH, Activation.SIGMOID], seed=1)
    _, loss_a = train_epoch(a, data, cfg)
    _, loss_b = train_epoch(b, data, cfg)
    assert loss_a == loss_b
    assert np.array_equal(a.parameter_vector(), b.parameter_vector())


def test_train_epoch_rejects_bad_data():
    net = init_network([4, 4], [Activation.SIGMOID], seed=0)
    cfg = TrainConfig()
    with pytest.raises(EmptyDataset):
        train_epoch(net, np.zeros((0, 4)), cfg)
    with pytest.raises(DimensionError):
        train_epoch(net, np.zeros((5, 3)), cfg)


def test_json_round_trip_is_exact(rng):
    net = init_network([7, 3, 7], [Activation.TANH, Activation.SIGMOID], seed=4)
    net.load_parameter_vector(rng.normal(size=net.parameter_vector().size))
    restored = network_from_json(network_to_json(net))
    assert np.array_equal(net.parameter_vector(), restored.parameter_vector())
    assert restored.activation_tags == net.activation_tags
    x = rng.uniform(size=7)
    assert np.array_equal(forward(net, x)[-1], forward(restored, x)[-1])


def test_document_with_broken_chain_is_rejected():
    net = init_network([4, 2, 4], [Activation.TANH, Activation.SIGMOID], seed=0)
    doc = network_to_document(net).model_dump()
    doc["layers"][1]["cols"] = 3
    doc["layers"][1]["weights"] = [0.0] * 12
    with pytest.raises(InvalidArchitecture):
        network_from_document(NetworkDocument.model_validate(doc))


def test_document_with_wrong_weight_count_is_rejected():
    net = init_network([4, 2], [Activation.SIGMOID], seed=0)
    doc = network_to_document(net).model_dump()
    doc["layers"][0]["weights"] = doc["layers"][0]["weights"][:-1]
    with pytest.raises(InvalidArchitecture):
        network_from_document(NetworkDocument.model_validate(doc))
