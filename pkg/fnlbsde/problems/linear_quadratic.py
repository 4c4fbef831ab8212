"""Provides the linear-quadratic control problem written as a fully nonlinear PDE."""

import functools

import numpy as np

from fnlbsde.common import types
from fnlbsde.oracles import riccati
from fnlbsde.problems import base
from fnlbsde.sde import truncation


def default_params(dim: int, maturity: float = 1.0) -> riccati.LinearQuadraticParams:
    """Returns `A = I`, `b = d = 1_d`, `Q = P = I / d`, `N = d`."""
    identity = np.eye(dim, dtype=types.FLOAT_DTYPE)
    ones = np.ones(dim, dtype=types.FLOAT_DTYPE)
    return riccati.LinearQuadraticParams(a=identity, b=ones, d=ones.copy(), q=identity / dim, p=identity / dim,
                                         n_ctrl=float(dim), maturity=maturity)


class LinearQuadratic(base.ProblemSpec):
    """`f = x^T Q x + (A x) . z - |b^T z|^2 / (2 (tr(d d^T gamma) + 2 N))`, `g(x) = x^T P x`.

    Trained with `mu = A x` and `sigma = sigma_hat / sqrt(d) I` from `x0 = 1_d`.
    """
    default_quantile = 0.999

    def __init__(self, *, params: riccati.LinearQuadraticParams, sigma_hat: float = 1.0,
                 x0: types.Vector | None = None) -> None:
        self.name = "lq"
        self.params = params
        self.dim = params.dim
        self.maturity = params.maturity
        self.sigma_hat = sigma_hat
        self.x0 = np.ones(self.dim, dtype=types.FLOAT_DTYPE) if x0 is None else np.asarray(x0, dtype=types.FLOAT_DTYPE)
        self._sigma = sigma_hat / np.sqrt(self.dim) * np.eye(self.dim, dtype=types.FLOAT_DTYPE)

    @functools.cached_property
    def riccati_solution(self) -> riccati.RiccatiSolution:
        return riccati.riccati_solve(self.params)

    def generator(self, t: float, x: types.Matrix, y: types.Vector, z: types.Matrix,
                  gamma: types.Array) -> base.GeneratorValue:
        """Evaluates the Hamiltonian with the feedback control optimized out."""
        params = self.params
        drift = x @ params.a.T
        control = z @ params.b
        denominator, clamped = base.clamp_denominator(
            np.einsum("i,bij,j->b", params.d, gamma, params.d) + 2.0 * params.n_ctrl)
        value = np.einsum("bi,ij,bj->b", x, params.q, x) + np.sum(drift * z, axis=1) - 0.5 * control**2 / denominator
        dz = drift - (control / denominator)[:, None] * params.b
        dgamma = (0.5 * control**2 / denominator**2)[:, None, None] * np.outer(params.d, params.d)
        return base.GeneratorValue(value=value, dy=np.zeros_like(y), dz=dz, dgamma=dgamma, clamped=clamped)

    def terminal(self, x: types.Matrix) -> types.Vector:
        """`x^T P x`."""
        return np.einsum("bi,ij,bj->b", x, self.params.p, x)

    def terminal_gradient(self, x: types.Matrix) -> types.Matrix:
        """`(P + P^T) x`."""
        return x @ (self.params.p + self.params.p.T)

    def drift(self, t: float, x: types.Matrix) -> types.Matrix:
        """The uncontrolled drift `A x`."""
        return x @ self.params.a.T

    def diffusion(self, t: float, x: types.Matrix) -> types.Array:
        """The constant diffusion, scaled by `sigma_hat`."""
        return self._constant_diffusion(self._sigma, x)

    def truncation(self, quantile: float | None) -> truncation.TruncationOp | None:
        """Truncation of the Ornstein-Uhlenbeck training process, drifting towards zero."""
        if quantile is None:
            return None
        return truncation.TruncationOp(variant="ou-exponential", quantile=quantile, x0=self.x0,
                                       sigma=np.diag(self._sigma).copy(), rate=np.diag(self.params.a).copy())

    def reference(self, t: float, x: types.Matrix) -> base.Triple:
        """The quadratic solution from the Riccati system; needs an accurate solve."""
        return riccati.lq_exact(t, x, self.riccati_solution)
