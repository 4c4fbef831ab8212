"""Provides the abstract problem definition shared by every benchmark."""

import abc
import dataclasses

import numpy as np

from fnlbsde.common import types
from fnlbsde.sde import truncation

DENOMINATOR_EPS = 1e-6
"""Smallest magnitude allowed for denominators of the generators."""


@dataclasses.dataclass(frozen=True)
class GeneratorValue:
    """Batched value of a generator and its partial derivatives."""
    value: types.Vector
    """`f(t, x, y, z, gamma)`, shaped `(B,)`."""
    dy: types.Vector
    """`df/dy`, shaped `(B,)`."""
    dz: types.Matrix
    """`df/dz`, shaped `(B, d)`."""
    dgamma: types.Array
    """`df/dgamma`, shaped `(B, d, d)`; symmetric."""
    clamped: int = 0
    """The number of denominators that had to be clamped."""


@dataclasses.dataclass(frozen=True)
class Triple:
    """A solution value with its gradient and Hessian, batched."""
    u: types.Vector
    z: types.Matrix
    gamma: types.Array


def clamp_denominator(denominator: types.Array, eps: float = DENOMINATOR_EPS) -> tuple[types.Array, int]:
    """Moves denominators away from zero, preserving their sign (zero goes to `+eps`).

    Args:
        denominator: The denominators.
        eps: The smallest allowed magnitude.

    Returns:
        The clamped denominators and how many entries were changed.
    """
    small = np.abs(denominator) < eps
    count = int(np.count_nonzero(small))
    if count == 0:
        return denominator, 0
    sign = np.where(denominator < 0.0, -1.0, 1.0)
    return np.where(small, sign * eps, denominator), count


class ProblemSpec(abc.ABC):
    """A fully nonlinear PDE `u_t + f(t, x, u, Du, D^2u) = 0`, `u(T, .) = g`, with its training diffusion."""
    name: str
    dim: int
    maturity: float
    x0: types.Vector
    num_factors: int = 0
    """The number of trailing state coordinates that are volatility factors."""
    default_quantile: float | None = None

    @abc.abstractmethod
    def generator(self, t: float, x: types.Matrix, y: types.Vector, z: types.Matrix,
                  gamma: types.Array) -> GeneratorValue:
        """Evaluates the generator and its partial derivatives on a batch."""

    @abc.abstractmethod
    def terminal(self, x: types.Matrix) -> types.Vector:
        """Evaluates `g` on a batch `(B, d)`."""

    @abc.abstractmethod
    def terminal_gradient(self, x: types.Matrix) -> types.Matrix:
        """Evaluates `Dg` on a batch `(B, d)`."""

    @abc.abstractmethod
    def drift(self, t: float, x: types.Matrix) -> types.Matrix:
        """The training drift `mu(t, x)`, shaped `(B, d)`."""

    @abc.abstractmethod
    def diffusion(self, t: float, x: types.Matrix) -> types.Array:
        """The training diffusion `sigma(t, x)`, shaped `(B, d, d)`."""

    def truncation(self, quantile: float | None) -> truncation.TruncationOp | None:
        """Returns the truncation operator for quantile `p`, or None for no truncation."""
        del quantile
        return None

    def reference(self, t: float, x: types.Matrix) -> Triple | None:
        """Returns the analytic `(u, Du, D^2u)` when it is known."""
        del t, x
        return None

    def control(self, t: float, x: types.Matrix, z: types.Matrix,
                gamma: types.Array) -> tuple[types.Matrix, int] | None:
        """Returns the feedback control built from `(z, gamma)` and a clamp count, when defined."""
        del t, x, z, gamma
        return None

    def _constant_diffusion(self, matrix: types.Matrix, x: types.Matrix) -> types.Array:
        return np.broadcast_to(matrix, (x.shape[0], self.dim, self.dim))
