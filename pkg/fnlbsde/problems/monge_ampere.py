"""Provides the parabolic Monge-Ampere problem built around `g(x) = cos(sum(x) / sqrt(d))`."""

import numpy as np

from fnlbsde.common import types
from fnlbsde.oracles import closed_form
from fnlbsde.problems import base
from fnlbsde.sde import truncation


def cofactor(gamma: types.Array) -> types.Array:
    """Returns the cofactor matrices `d det(gamma) / d gamma` of a batch `(B, d, d)`, singular or not."""
    dim = gamma.shape[-1]
    if dim == 1:
        return np.ones_like(gamma)
    result = np.empty_like(gamma)
    indices = np.arange(dim)
    for i in range(dim):
        rows = indices != i
        for j in range(dim):
            minor = gamma[:, rows][:, :, indices != j]
            result[:, i, j] = (-1.0) ** (i + j) * np.linalg.det(minor)
    return result


class MongeAmpere(base.ProblemSpec):
    """`f = det(gamma) - h(x)` with `h = det(D^2 g) - 1`, so that `u = g + T - t`.

    Trained with `mu = 0` and `sigma = sigma_hat I` from `x0 = 1_d`; no truncation by default.
    """

    def __init__(self, *, dim: int, maturity: float = 1.0, sigma_hat: float = 1.0) -> None:
        self.name = "monge-ampere"
        self.dim = dim
        self.maturity = maturity
        self.sigma_hat = sigma_hat
        self.x0 = np.ones(dim, dtype=types.FLOAT_DTYPE)
        self._sigma = sigma_hat * np.eye(dim, dtype=types.FLOAT_DTYPE)

    def source(self, x: types.Matrix) -> types.Vector:
        """`h(x)`: `-cos(x) - 1` in one dimension, `-1` otherwise (`D^2 g` has rank one)."""
        if self.dim == 1:
            return -np.cos(x[:, 0]) - 1.0
        return np.full(x.shape[0], -1.0, dtype=types.FLOAT_DTYPE)

    def generator(self, t: float, x: types.Matrix, y: types.Vector, z: types.Matrix,
                  gamma: types.Array) -> base.GeneratorValue:
        """`det(gamma) - h(x)`, with the cofactor matrix as the Hessian partial."""
        value = np.linalg.det(gamma) - self.source(x)
        return base.GeneratorValue(value=value, dy=np.zeros_like(y), dz=np.zeros_like(z), dgamma=cofactor(gamma))

    def terminal(self, x: types.Matrix) -> types.Vector:
        """`cos(sum(x) / sqrt(d))`."""
        return np.cos(x.sum(axis=1) / np.sqrt(self.dim))

    def terminal_gradient(self, x: types.Matrix) -> types.Matrix:
        """The gradient of `g`, equal in every coordinate."""
        slope = -np.sin(x.sum(axis=1) / np.sqrt(self.dim)) / np.sqrt(self.dim)
        return np.repeat(slope[:, None], self.dim, axis=1)

    def drift(self, t: float, x: types.Matrix) -> types.Matrix:
        """Zero."""
        return np.zeros_like(x)

    def diffusion(self, t: float, x: types.Matrix) -> types.Array:
        """The constant training diffusion `sigma_hat / sqrt(d) I`."""
        return self._constant_diffusion(self._sigma, x)

    def truncation(self, quantile: float | None) -> truncation.TruncationOp | None:
        """Static truncation around `x0` with the training scale."""
        if quantile is None:
            return None
        return truncation.TruncationOp(variant="static", quantile=quantile, x0=self.x0,
                                       sigma=np.diag(self._sigma).copy())

    def reference(self, t: float, x: types.Matrix) -> base.Triple:
        """The closed form, with its gradient and Hessian."""
        return closed_form.monge_ampere_exact(t, x, self.maturity)
