"""Provides Euler-Maruyama simulation of the training diffusion."""

import dataclasses
from typing import TYPE_CHECKING

import numpy as np

from fnlbsde.common import errors, types
from fnlbsde.sde import grid as grid_lib
from fnlbsde.sde import normal

if TYPE_CHECKING:
    from fnlbsde.problems import base


@dataclasses.dataclass(frozen=True)
class PathBatch:
    """A batch of simulated trajectories and the Brownian increments driving them."""
    states: types.Array
    """The states `X_{t_i}`, shaped `(B, n + 1, d)` for `n` simulated steps."""
    increments: types.Array
    """The Brownian increments `Delta W_{t_i}`, shaped `(B, n, d)`."""
    num_factors: int = 0
    """The number of trailing state coordinates that are volatility factors."""

    @property
    def batch_size(self) -> int:
        return self.states.shape[0]

    @property
    def factor_increments(self) -> types.Array:
        """The increments `Delta B` driving the factors, shaped `(B, n, num_factors)`."""
        return self.increments[:, :, self.states.shape[2] - self.num_factors:]


def simulate_paths(problem: "base.ProblemSpec", time_grid: grid_lib.TimeGrid, batch_size: int,
                   generator: np.random.Generator, *, num_steps: int | None = None) -> PathBatch:
    """Simulates `X_{t_{i+1}} = X_{t_i} + mu(t_i, X_{t_i}) dt_i + sigma(t_i, X_{t_i}) dW_{t_i}`.

    Args:
        problem: Supplies the training drift, diffusion and starting point.
        time_grid: The time grid.
        batch_size: The number B of trajectories.
        generator: The random stream the increments are drawn from.
        num_steps: Simulate only the first `num_steps` steps; all of them when omitted.

    Returns:
        The simulated `PathBatch`.

    Raises:
        ConfigurationError: If `batch_size` or `num_steps` is invalid.
        SimulationBlowupError: If a state becomes non-finite.
    """
    num_steps = time_grid.num_steps if num_steps is None else num_steps
    if batch_size < 1 or not 0 <= num_steps <= time_grid.num_steps:
        error_message = f"Invalid simulation size: B={batch_size}, steps={num_steps}"
        raise errors.ConfigurationError(error_message)
    dim = problem.dim
    dt = time_grid.increments[:num_steps]
    increments = normal.standard_normal(generator, (batch_size, num_steps, dim)) * np.sqrt(dt)[None, :, None]
    states = np.empty((batch_size, num_steps + 1, dim), dtype=types.FLOAT_DTYPE)
    states[:, 0] = problem.x0
    for i in range(num_steps):
        t = time_grid.nodes[i]
        x = states[:, i]
        sigma = problem.diffusion(t, x)
        states[:, i + 1] = x + problem.drift(t, x) * dt[i] + np.einsum("bij,bj->bi", sigma, increments[:, i])
        if not np.all(np.isfinite(states[:, i + 1])):
            error_message = "Non-finite state in Euler simulation"
            raise errors.SimulationBlowupError(error_message, step=i + 1)
    return PathBatch(states=states, increments=increments, num_factors=problem.num_factors)
