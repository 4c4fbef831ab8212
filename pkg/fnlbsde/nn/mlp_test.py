import numpy as np
import pytest

from fnlbsde.common import errors, rng
from fnlbsde.nn import mlp

_TEST_STREAM = 99


def _random_net(input_dim: int, output_dim: int, num_layers: int = 3, width: int = 7, seed: int = 3) -> mlp.MLP:
    net = mlp.init(input_dim, output_dim, num_layers, width, seed)
    # Non-zero biases so that every path of the backward pass is exercised.
    net.params += 0.1 * rng.stream(seed, _TEST_STREAM, 99).standard_normal(net.params.shape)
    return net


def test_parameter_count():
    assert mlp.parameter_count(1, 2, 3, 20) == 502
    assert mlp.parameter_count(3, 4, 4, 20) == 1004
    net = mlp.init(3, 4, 4, 20, seed=1)
    assert net.params.size == 1004
    assert [weight.shape for weight, _ in net.layers] == [(20, 3), (20, 20), (20, 20), (4, 20)]


def test_init_is_deterministic():
    first = mlp.init(1, 2, 3, 20, seed=7)
    second = mlp.init(1, 2, 3, 20, seed=7)
    third = mlp.init(1, 2, 3, 20, seed=8)
    np.testing.assert_array_equal(first.params, second.params)
    assert not np.array_equal(first.params, third.params)
    for weight, bias in first.layers:
        fan_out, fan_in = weight.shape
        assert np.all(np.abs(weight) <= np.sqrt(6.0 / (fan_in + fan_out)))
        np.testing.assert_array_equal(bias, 0.0)


@pytest.mark.parametrize("num_layers", [1, 2])
def test_init_rejects_shallow_networks(num_layers):
    with pytest.raises(errors.ConfigurationError):
        mlp.init(2, 3, num_layers, 5, seed=0)


def test_constant_network():
    value = np.array([1.5, -2.0, 0.25])
    net = mlp.constant(2, 3, 3, 5, value)
    np.testing.assert_array_equal(net.forward(np.zeros(2)), value)
    np.testing.assert_array_equal(net.forward(np.ones((4, 2))), np.tile(value, (4, 1)))
    np.testing.assert_array_equal(net.input_jacobian(np.ones(2)), np.zeros((3, 2)))


def test_forward_rejects_wrong_dimension():
    net = mlp.init(3, 2, 3, 4, seed=0)
    with pytest.raises(errors.ShapeError):
        net.forward(np.zeros(2))
    with pytest.raises(errors.ShapeError):
        net.forward(np.zeros((5, 4)))


def test_forward_batch_matches_points():
    net = _random_net(3, 4)
    x = rng.stream(0, _TEST_STREAM).standard_normal((6, 3))
    batch = net.forward(x)
    for row, point in zip(batch, x, strict=True):
        np.testing.assert_allclose(row, net.forward(point), rtol=0, atol=1e-15)


def test_input_jacobian_single_neuron():
    net = mlp.MLP(input_dim=1, output_dim=1, num_layers=2, width=1)
    (w1, b1), (w2, b2) = net.layers
    w1[...] = 0.7
    b1[...] = -0.3
    w2[...] = 1.9
    b2[...] = 0.4
    x = 0.8
    expected = 1.9 * (1.0 - np.tanh(0.7 * x - 0.3) ** 2) * 0.7
    np.testing.assert_allclose(net.input_jacobian(np.array([x]))[0, 0], expected, rtol=0, atol=1e-14)
    np.testing.assert_allclose(net.forward(np.array([x]))[0], 1.9 * np.tanh(0.7 * x - 0.3) + 0.4, atol=1e-15)


@pytest.mark.parametrize("input_dim", [1, 2, 5, 10])
def test_input_jacobian_matches_finite_differences(input_dim):
    net = _random_net(input_dim, input_dim + 1, num_layers=4, width=11, seed=input_dim)
    x = rng.stream(input_dim, _TEST_STREAM).standard_normal(input_dim)
    jacobian = net.input_jacobian(x, head=slice(1, None))
    step = 1e-5
    for k in range(input_dim):
        shift = np.zeros(input_dim)
        shift[k] = step
        column = (net.forward(x + shift) - net.forward(x - shift))[1:] / (2 * step)
        np.testing.assert_allclose(jacobian[:, k], column, rtol=1e-6, atol=1e-9)


def test_forward_with_jacobian_matches_separate_calls():
    net = _random_net(3, 4)
    x = rng.stream(1, _TEST_STREAM).standard_normal((5, 3))
    output, jacobian = net.forward_with_jacobian(x, head=slice(1, None))
    np.testing.assert_allclose(output, net.forward(x), atol=1e-15)
    np.testing.assert_allclose(jacobian, net.input_jacobian(x, head=slice(1, None)), atol=1e-15)


def _directional_check(loss_of_params, params, gradient, seed):
    generator = rng.stream(seed, _TEST_STREAM, 7)
    step = 1e-6
    for _ in range(20):
        direction = generator.standard_normal(params.shape)
        direction /= np.linalg.norm(direction)
        numeric = (loss_of_params(params + step * direction) - loss_of_params(params - step * direction)) / (2 * step)
        analytic = gradient @ direction
        assert abs(numeric - analytic) <= 1e-6 * max(1.0, abs(analytic))


def test_loss_param_grad_matches_directional_derivatives():
    net = _random_net(3, 4, num_layers=4, width=9)
    x = rng.stream(2, _TEST_STREAM).standard_normal((16, 3))
    target = rng.stream(3, _TEST_STREAM).standard_normal((16, 4))

    def loss(output):
        residual = output - target
        return float(np.mean(np.sum(residual**2, axis=1))), 2.0 * residual / len(x)

    value, gradient = mlp.loss_param_grad(net, x, loss)

    def loss_of_params(params):
        shifted = mlp.MLP(input_dim=3, output_dim=4, num_layers=4, width=9, params=params)
        return loss(shifted.forward(x))[0]

    assert value == pytest.approx(loss_of_params(net.params.copy()))
    _directional_check(loss_of_params, net.params.copy(), gradient, seed=4)


def test_loss_param_grad_raises_on_non_finite_loss():
    net = _random_net(2, 1)
    with pytest.raises(errors.TrainingDivergenceError):
        mlp.loss_param_grad(net, np.zeros((3, 2)), lambda output: (float("nan"), np.zeros_like(output)))


@pytest.mark.parametrize("separate_points", [False, True])
def test_jacobian_param_grad_matches_directional_derivatives(separate_points):
    net = _random_net(3, 4, num_layers=4, width=8, seed=5)
    x = rng.stream(5, _TEST_STREAM).standard_normal((12, 3))
    points = x + 0.3 if separate_points else None
    weights = rng.stream(6, _TEST_STREAM).standard_normal((3, 3))
    head = slice(1, None)

    def loss(output, jacobian):
        value = np.mean(output[:, 0] ** 2) + np.mean(np.einsum("bij,ij->b", jacobian, weights) ** 2)
        inner = np.einsum("bij,ij->b", jacobian, weights)
        output_bar = np.zeros_like(output)
        output_bar[:, 0] = 2.0 * output[:, 0] / len(output)
        jacobian_bar = (2.0 * inner / len(output))[:, None, None] * weights
        return float(value), output_bar, jacobian_bar

    _, gradient = mlp.jacobian_param_grad(net, x, loss, jacobian_points=points, head=head)

    def loss_of_params(params):
        shifted = mlp.MLP(input_dim=3, output_dim=4, num_layers=4, width=8, params=params)
        jacobian = shifted.input_jacobian(x if points is None else points, head=head)
        return loss(shifted.forward(x), jacobian)[0]

    _directional_check(loss_of_params, net.params.copy(), gradient, seed=6)


def test_jacobian_param_grad_without_jacobian_dependence_equals_loss_param_grad():
    net = _random_net(2, 3, seed=8)
    x = rng.stream(8, _TEST_STREAM).standard_normal((10, 2))

    def output_loss(output):
        return float(np.mean(output**2)), 2.0 * output / output.size

    def jacobian_loss(output, jacobian):
        value, output_bar = output_loss(output)
        return value, output_bar, np.zeros_like(jacobian)

    _, expected = mlp.loss_param_grad(net, x, output_loss)
    _, actual = mlp.jacobian_param_grad(net, x, jacobian_loss, head=slice(1, None))
    np.testing.assert_allclose(actual, expected, rtol=0, atol=1e-14)
