"""Provides dense tanh networks with exact parameter gradients and input Jacobians.

Parameters live in a single flat vector `params`; the per-layer weights and biases are
views into it, so optimizers can update the vector in place.
"""

import dataclasses
from collections.abc import Callable

import numpy as np

from fnlbsde.common import errors, rng, types

OutputLoss = Callable[[types.Array], tuple[float, types.Array]]
"""Maps network outputs `(B, d1)` to the loss value and its gradient w.r.t. the outputs."""
JacobianLoss = Callable[[types.Array, types.Array], tuple[float, types.Array, types.Array]]
"""Maps outputs `(B, d1)` and head Jacobians `(B, h, d0)` to the loss and both gradients."""


def layer_shapes(input_dim: int, output_dim: int, num_layers: int, width: int) -> list[tuple[int, int]]:
    """Returns the weight shapes `(fan_out, fan_in)` of the affine maps A_1 ... A_L."""
    return [(width, input_dim)] + [(width, width)] * (num_layers - 2) + [(output_dim, width)]


def parameter_count(input_dim: int, output_dim: int, num_layers: int, width: int) -> int:
    """Returns the number of weights and biases of a network.

    Args:
        input_dim: The input dimension d0.
        output_dim: The output dimension d1.
        num_layers: The number L of affine maps (L - 1 hidden layers).
        width: The hidden width m.

    Returns:
        `m(1 + d0) + m(1 + m)(L - 2) + d1(1 + m)`.
    """
    return width * (1 + input_dim) + width * (1 + width) * (num_layers - 2) + output_dim * (1 + width)


@dataclasses.dataclass
class ForwardCache:
    """Intermediate values of a forward pass, reused by the backward passes."""
    activations: list[types.Array]
    """Inputs followed by the output of every hidden layer, each `(B, .)`."""
    tangents: list[tuple[types.Array, types.Array]] | None = None
    """Per hidden layer, the forward-mode tangents of pre- and post-activation `(B, m, d0)`."""


class MLP:
    """A feedforward network `A_L o tanh o A_{L-1} o ... o tanh o A_1`."""
    input_dim: int
    output_dim: int
    num_layers: int
    width: int
    params: types.Array

    def __init__(self, *, input_dim: int, output_dim: int, num_layers: int, width: int,
                 params: types.Array | None = None) -> None:
        """Initializes an `MLP` instance.

        Args:
            input_dim: The input dimension d0.
            output_dim: The output dimension d1.
            num_layers: The number L of affine maps, at least 2 (one hidden layer).
            width: The hidden width m.
            params: The flat parameter vector; zeros when omitted.

        Raises:
            ConfigurationError: If a dimension is invalid or `params` has the wrong length.
        """
        if min(input_dim, output_dim, width) < 1 or num_layers < 2:  # noqa: PLR2004
            error_message = (f"Invalid network dimensions: d0={input_dim}, d1={output_dim}, "
                             f"L={num_layers}, m={width}")
            raise errors.ConfigurationError(error_message)
        self.input_dim = input_dim
        self.output_dim = output_dim
        self.num_layers = num_layers
        self.width = width
        count = parameter_count(input_dim, output_dim, num_layers, width)
        if params is None:
            params = np.zeros(count, dtype=types.FLOAT_DTYPE)
        elif params.shape != (count,):
            error_message = f"Expected {count} parameters, got shape {params.shape}"
            raise errors.ConfigurationError(error_message)
        self.params = params

    @property
    def hidden_layers(self) -> int:
        """The number of hidden layers L - 1."""
        return self.num_layers - 1

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return layer_shapes(self.input_dim, self.output_dim, self.num_layers, self.width)

    def unflatten(self, vector: types.Array) -> list[tuple[types.Array, types.Array]]:
        """Splits a parameter-shaped vector into per-layer `(W, b)` views."""
        layers = []
        offset = 0
        for fan_out, fan_in in self.shapes:
            weight = vector[offset: offset + fan_out * fan_in].reshape(fan_out, fan_in)
            offset += fan_out * fan_in
            bias = vector[offset: offset + fan_out]
            offset += fan_out
            layers.append((weight, bias))
        return layers

    @property
    def layers(self) -> list[tuple[types.Array, types.Array]]:
        """The `(W_l, beta_l)` pairs, as views into `params`."""
        return self.unflatten(self.params)

    def copy(self) -> "MLP":
        """Returns a network with the same architecture and a copy of the parameters."""
        return MLP(input_dim=self.input_dim, output_dim=self.output_dim, num_layers=self.num_layers,
                   width=self.width, params=self.params.copy())

    def _check_input(self, x: types.Array) -> tuple[types.Array, bool]:
        array = np.asarray(x, dtype=types.FLOAT_DTYPE)
        single = array.ndim == 1
        if single:
            array = array[None, :]
        if array.ndim != 2 or array.shape[1] != self.input_dim:  # noqa: PLR2004
            error_message = f"Expected inputs with trailing dimension {self.input_dim}, got shape {array.shape}"
            raise errors.ShapeError(error_message)
        return array, single

    def _forward(self, x: types.Array, *, with_tangents: bool = False) -> tuple[types.Array, ForwardCache]:
        layers = self.layers
        activations = [x]
        tangents = [] if with_tangents else None
        hidden = x
        for index, (weight, bias) in enumerate(layers[:-1]):
            hidden = np.tanh(hidden @ weight.T + bias)
            activations.append(hidden)
            if tangents is not None:
                slope = 1.0 - hidden**2
                if index == 0:
                    pre = np.broadcast_to(weight, (x.shape[0], *weight.shape))
                else:
                    pre = np.einsum("mk,bkd->bmd", weight, tangents[-1][1])
                tangents.append((pre, slope[:, :, None] * pre))
        weight, bias = layers[-1]
        output = hidden @ weight.T + bias
        return output, ForwardCache(activations=activations, tangents=tangents)

    def forward(self, x: types.Array) -> types.Array:
        """Evaluates the network.

        Args:
            x: A point `(d0,)` or a batch `(B, d0)`.

        Returns:
            The outputs, `(d1,)` or `(B, d1)`.

        Raises:
            ShapeError: If the trailing dimension of `x` is not d0.
        """
        array, single = self._check_input(x)
        output, _ = self._forward(array)
        return output[0] if single else output

    __call__ = forward

    def input_jacobian(self, x: types.Array, head: slice | None = None) -> types.Array:
        """Computes the exact Jacobian of selected outputs by forward accumulation.

        Args:
            x: A point `(d0,)` or a batch `(B, d0)`.
            head: The output rows to differentiate; all outputs when omitted.

        Returns:
            `W_L[head] diag(1 - a_{L-1}^2) ... diag(1 - a_1^2) W_1`, shaped `(h, d0)` or `(B, h, d0)`.
        """
        array, single = self._check_input(x)
        _, cache = self._forward(array, with_tangents=True)
        weight, _ = self.layers[-1]
        head = slice(None) if head is None else head
        jacobian = np.einsum("ok,bkd->bod", weight[head], cache.tangents[-1][1])
        return jacobian[0] if single else jacobian

    def forward_with_jacobian(self, x: types.Array, head: slice | None = None) -> tuple[types.Array, types.Array]:
        """Returns the outputs `(B, d1)` and the head Jacobian `(B, h, d0)` from a single pass."""
        array, _ = self._check_input(x)
        output, cache = self._forward(array, with_tangents=True)
        weight, _ = self.layers[-1]
        head = slice(None) if head is None else head
        return output, np.einsum("ok,bkd->bod", weight[head], cache.tangents[-1][1])

    def vjp(self, cache: ForwardCache, output_bar: types.Array | None, jacobian_bar: types.Array | None = None,
            head: slice | None = None) -> types.Array:
        """Pulls output and Jacobian cotangents back onto the parameters.

        Reverse accumulation over the primal pass and, when `jacobian_bar` is given, over the
        forward-mode tangent pass as well (nested accumulation).

        Args:
            cache: The cache of the forward pass; must hold tangents if `jacobian_bar` is given.
            output_bar: The gradient of the loss w.r.t. the outputs `(B, d1)`, or None.
            jacobian_bar: The gradient of the loss w.r.t. the head Jacobian `(B, h, d0)`, or None.
            head: The output rows the Jacobian was taken of.

        Returns:
            The flat gradient w.r.t. `params`.
        """
        layers = self.layers
        gradient = np.zeros_like(self.params)
        gradient_layers = self.unflatten(gradient)
        activations = cache.activations
        batch = activations[0].shape[0]
        head = slice(None) if head is None else head
        if output_bar is None:
            output_bar = np.zeros((batch, self.output_dim), dtype=self.params.dtype)

        weight, _ = layers[-1]
        grad_weight, grad_bias = gradient_layers[-1]
        grad_weight += output_bar.T @ activations[-1]
        grad_bias += output_bar.sum(axis=0)
        activation_bar = output_bar @ weight
        tangent_bar = None
        if jacobian_bar is not None:
            grad_weight[head] += np.einsum("bod,bmd->om", jacobian_bar, cache.tangents[-1][1])
            tangent_bar = np.einsum("bod,om->bmd", jacobian_bar, weight[head])

        for index in range(self.num_layers - 2, -1, -1):
            weight, _ = layers[index]
            grad_weight, grad_bias = gradient_layers[index]
            hidden = activations[index + 1]
            slope = 1.0 - hidden**2
            pre_bar = None
            if tangent_bar is not None:
                pre, _ = cache.tangents[index]
                pre_bar = slope[:, :, None] * tangent_bar
                slope_bar = np.einsum("bmd,bmd->bm", tangent_bar, pre)
                activation_bar = activation_bar - 2.0 * hidden * slope_bar
            z_bar = activation_bar * slope
            grad_bias += z_bar.sum(axis=0)
            grad_weight += z_bar.T @ activations[index]
            if pre_bar is not None:
                if index == 0:
                    grad_weight += pre_bar.sum(axis=0)
                else:
                    grad_weight += np.einsum("bmd,bkd->mk", pre_bar, cache.tangents[index - 1][1])
                    tangent_bar = np.einsum("bmd,mk->bkd", pre_bar, weight)
            activation_bar = z_bar @ weight
        return gradient


def init(input_dim: int, output_dim: int, num_layers: int, width: int, seed: int) -> MLP:
    """Creates a network with Glorot-uniform weights and zero biases.

    Args:
        input_dim: The input dimension d0.
        output_dim: The output dimension d1.
        num_layers: The number L of affine maps, at least 3.
        width: The hidden width m.
        seed: The seed of the initialization stream.

    Returns:
        A new `MLP`, bit-identical for identical arguments.

    Raises:
        ConfigurationError: If a dimension is invalid.
    """
    if num_layers < 3:  # noqa: PLR2004
        error_message = f"A network needs at least 3 affine maps, got L={num_layers}"
        raise errors.ConfigurationError(error_message)
    net = MLP(input_dim=input_dim, output_dim=output_dim, num_layers=num_layers, width=width)
    generator = rng.stream(seed, rng.Purpose.INIT)
    for weight, _ in net.layers:
        fan_out, fan_in = weight.shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weight[...] = generator.uniform(-limit, limit, size=weight.shape)
    return net


def constant(input_dim: int, output_dim: int, num_layers: int, width: int, value: types.Array) -> MLP:
    """Creates a network returning `value` everywhere (zero weights, output bias `value`)."""
    net = MLP(input_dim=input_dim, output_dim=output_dim, num_layers=num_layers, width=width)
    net.layers[-1][1][...] = value
    return net


def _check_finite(value: float, gradient: types.Array) -> None:
    if not (np.isfinite(value) and np.all(np.isfinite(gradient))):
        error_message = "Non-finite loss or gradient"
        raise errors.TrainingDivergenceError(error_message)


def loss_param_grad(net: MLP, x: types.Array, loss: OutputLoss) -> tuple[float, types.Array]:
    """Computes a batch loss of the network outputs and its exact parameter gradient.

    Args:
        net: The network.
        x: The batch of inputs `(B, d0)`.
        loss: Maps the outputs to `(value, d value / d outputs)`.

    Returns:
        The loss value and the flat gradient w.r.t. `net.params`.

    Raises:
        TrainingDivergenceError: If the loss or the gradient is not finite.
    """
    array, _ = net._check_input(x)  # noqa: SLF001
    output, cache = net._forward(array)  # noqa: SLF001
    value, output_bar = loss(output)
    gradient = net.vjp(cache, output_bar)
    _check_finite(value, gradient)
    return value, gradient


def jacobian_param_grad(net: MLP, x: types.Array, loss: JacobianLoss, *,
                        jacobian_points: types.Array | None = None,
                        head: slice | None = None) -> tuple[float, types.Array]:
    """Computes a loss involving the outputs and the input Jacobian, and its parameter gradient.

    Args:
        net: The network.
        x: The batch of points `(B, d0)` where the outputs are taken.
        loss: Maps outputs and head Jacobians to `(value, outputs_bar, jacobian_bar)`.
        jacobian_points: The points where the Jacobian is taken; `x` when omitted.
        head: The output rows to differentiate.

    Returns:
        The loss value and the flat gradient w.r.t. `net.params`.

    Raises:
        TrainingDivergenceError: If the loss or the gradient is not finite.
    """
    array, _ = net._check_input(x)  # noqa: SLF001
    head = slice(None) if head is None else head
    weight, _ = net.layers[-1]
    if jacobian_points is None:
        output, cache = net._forward(array, with_tangents=True)  # noqa: SLF001
        jacobian = np.einsum("ok,bkd->bod", weight[head], cache.tangents[-1][1])
        value, output_bar, jacobian_bar = loss(output, jacobian)
        gradient = net.vjp(cache, output_bar, jacobian_bar, head)
    else:
        points, _ = net._check_input(jacobian_points)  # noqa: SLF001
        output, cache = net._forward(array)  # noqa: SLF001
        _, jacobian_cache = net._forward(points, with_tangents=True)  # noqa: SLF001
        jacobian = np.einsum("ok,bkd->bod", weight[head], jacobian_cache.tangents[-1][1])
        value, output_bar, jacobian_bar = loss(output, jacobian)
        gradient = net.vjp(cache, output_bar) + net.vjp(jacobian_cache, None, jacobian_bar, head)
    _check_finite(value, gradient)
    return value, gradient
