"""Provides the Adam optimizer and the plateau learning-rate controller."""

import dataclasses
import logging

import numpy as np

from fnlbsde.common import errors, types

_LOGGER = logging.getLogger(__name__)


@dataclasses.dataclass(kw_only=True)
class AdamState:
    """Moment estimates and step counter of a bias-corrected Adam optimizer."""
    first_moment: types.Array
    second_moment: types.Array
    learning_rate: float
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def fresh(cls, size: int, learning_rate: float) -> "AdamState":
        """Returns a zero-moment state for `size` parameters.

        Raises:
            ConfigurationError: If `learning_rate` is not positive.
        """
        if not learning_rate > 0.0:
            error_message = f"Learning rate must be positive, got {learning_rate}"
            raise errors.ConfigurationError(error_message)
        return cls(first_moment=np.zeros(size, dtype=types.FLOAT_DTYPE),
                   second_moment=np.zeros(size, dtype=types.FLOAT_DTYPE),
                   learning_rate=learning_rate)


def adam_step(state: AdamState, params: types.Array, gradient: types.Array) -> None:
    """Applies one Adam update in place.

    Args:
        state: The optimizer state, updated in place.
        params: The flat parameter vector, updated in place.
        gradient: The gradient w.r.t. `params`.

    Raises:
        TrainingDivergenceError: If `gradient` or the updated parameters are not finite.
    """
    if not np.all(np.isfinite(gradient)):
        error_message = "Non-finite gradient passed to Adam"
        raise errors.TrainingDivergenceError(error_message)
    state.step += 1
    state.first_moment *= state.beta1
    state.first_moment += (1.0 - state.beta1) * gradient
    state.second_moment *= state.beta2
    state.second_moment += (1.0 - state.beta2) * gradient**2
    first_hat = state.first_moment / (1.0 - state.beta1**state.step)
    second_hat = state.second_moment / (1.0 - state.beta2**state.step)
    params -= state.learning_rate * first_hat / (np.sqrt(second_hat) + state.epsilon)
    if not np.all(np.isfinite(params)):
        error_message = "Non-finite parameters after Adam update"
        raise errors.TrainingDivergenceError(error_message)


@dataclasses.dataclass(kw_only=True)
class LRController:
    """Halves the learning rate when the windowed validation loss stops decreasing.

    The losses of each outer iteration are recorded; every `window` outer iterations the
    mean of the last window is compared to the mean of the window before it.
    """
    window: int = 10
    threshold: float = 0.05
    factor: float = 2.0
    history: list[float] = dataclasses.field(default_factory=list)


def lr_update(controller: LRController, state: AdamState, validation_loss: float) -> bool:
    """Records an outer-iteration validation loss and possibly reduces the learning rate.

    Args:
        controller: The controller, whose history is appended to.
        state: The optimizer state whose learning rate is adjusted.
        validation_loss: The validation loss of the outer iteration just finished.

    Returns:
        Whether the learning rate was reduced.
    """
    controller.history.append(float(validation_loss))
    window = controller.window
    count = len(controller.history)
    if count % window != 0 or count < 2 * window:
        return False
    current = float(np.mean(controller.history[-window:]))
    previous = float(np.mean(controller.history[-2 * window: -window]))
    decrease = (previous - current) / previous if previous != 0.0 else 0.0
    if decrease < controller.threshold:
        state.learning_rate /= controller.factor
        _LOGGER.debug("Reduced learning rate to %.3g (relative decrease %.4f)", state.learning_rate, decrease)
        return True
    return False
