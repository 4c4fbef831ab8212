"""Provides time grids."""

import dataclasses

import numpy as np

from fnlbsde.common import errors, types


@dataclasses.dataclass(frozen=True)
class TimeGrid:
    """The nodes `0 = t_0 < ... < t_N = T` of the backward scheme."""
    maturity: float
    nodes: types.Vector

    @property
    def num_steps(self) -> int:
        return len(self.nodes) - 1

    @property
    def increments(self) -> types.Vector:
        """The time steps `t_{i+1} - t_i`."""
        return np.diff(self.nodes)


def make_time_grid(maturity: float, num_steps: int) -> TimeGrid:
    """Creates a uniform time grid.

    Args:
        maturity: The terminal time T > 0.
        num_steps: The number N >= 1 of time steps.

    Returns:
        A `TimeGrid` whose last node is exactly `maturity`.

    Raises:
        ConfigurationError: If `maturity` or `num_steps` is not positive.
    """
    if num_steps < 1:
        error_message = f"A time grid needs at least one step, got N={num_steps}"
        raise errors.ConfigurationError(error_message)
    if not maturity > 0.0:
        error_message = f"The maturity must be positive, got T={maturity}"
        raise errors.ConfigurationError(error_message)
    nodes = maturity * np.arange(num_steps + 1, dtype=types.FLOAT_DTYPE) / num_steps
    return TimeGrid(maturity=float(maturity), nodes=nodes)
