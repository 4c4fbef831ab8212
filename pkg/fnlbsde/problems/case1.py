"""Provides the semilinear-in-Hessian test problem with the tanh closed form."""

import numpy as np

from fnlbsde.common import types
from fnlbsde.oracles import closed_form
from fnlbsde.problems import base
from fnlbsde.sde import truncation


class Case1(base.ProblemSpec):
    """`f = y tr(gamma) + y / 2 + 2 y^2 - 2 y^4 exp(-(T - t))`, `g(x) = tanh(sum(x) / sqrt(d))`.

    Trained with `mu = 0` and `sigma = sigma_hat / sqrt(d) I` from `x0 = 0.5 / sqrt(d) 1_d`.
    """
    default_quantile = 0.999

    def __init__(self, *, dim: int, maturity: float = 1.0, sigma_hat: float = 1.0) -> None:
        self.name = "case1"
        self.dim = dim
        self.maturity = maturity
        self.sigma_hat = sigma_hat
        self.x0 = np.full(dim, 0.5 / np.sqrt(dim), dtype=types.FLOAT_DTYPE)
        self._sigma = sigma_hat / np.sqrt(dim) * np.eye(dim, dtype=types.FLOAT_DTYPE)

    def generator(self, t: float, x: types.Matrix, y: types.Vector, z: types.Matrix,
                  gamma: types.Array) -> base.GeneratorValue:
        """Evaluates `f` and its partials; `f` is linear in `gamma` through its trace."""
        decay = np.exp(-(self.maturity - t))
        trace = np.trace(gamma, axis1=1, axis2=2)
        value = y * trace + 0.5 * y + 2.0 * y**2 - 2.0 * y**4 * decay
        dy = trace + 0.5 + 4.0 * y - 8.0 * y**3 * decay
        dgamma = y[:, None, None] * np.eye(self.dim)
        return base.GeneratorValue(value=value, dy=dy, dz=np.zeros_like(z), dgamma=dgamma)

    def terminal(self, x: types.Matrix) -> types.Vector:
        """`tanh(sum(x) / sqrt(d))`."""
        return np.tanh(x.sum(axis=1) / np.sqrt(self.dim))

    def terminal_gradient(self, x: types.Matrix) -> types.Matrix:
        """The gradient of `g`, equal in every coordinate."""
        slope = (1.0 - self.terminal(x) ** 2) / np.sqrt(self.dim)
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
        """The closed form `tanh(sum(x) / sqrt(d)) exp((T - t) / 2)` with its gradient and Hessian."""
        return closed_form.case1_exact(t, x, self.maturity)
