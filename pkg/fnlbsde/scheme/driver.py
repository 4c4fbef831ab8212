"""Provides the modified generator `f~` and the one-step map `F` of the backward scheme.

Both return their value together with the partial derivatives in `(y, z, gamma)`, which the
training losses pull back onto the network outputs and Jacobians.
"""

import numpy as np

from fnlbsde.common import errors, types
from fnlbsde.problems import base


def _diffusion_square(sigma: types.Array) -> types.Array:
    return np.einsum("bij,bkj->bik", sigma, sigma)


def _tilde(problem: base.ProblemSpec, t: float, x: types.Matrix, y: types.Vector, z: types.Matrix,
           gamma: types.Array, sigma: types.Array) -> base.GeneratorValue:
    result = problem.generator(t, x, y, z, gamma)
    mu = problem.drift(t, x)
    covariance = _diffusion_square(sigma)
    value = (result.value - np.sum(mu * z, axis=1)
             - 0.5 * np.einsum("bik,bki->b", covariance, gamma))
    return base.GeneratorValue(value=value, dy=result.dy, dz=result.dz - mu,
                               dgamma=result.dgamma - 0.5 * covariance, clamped=result.clamped)


def f_tilde(problem: base.ProblemSpec, t: float, x: types.Matrix, y: types.Vector, z: types.Matrix,
            gamma: types.Array) -> base.GeneratorValue:
    """Evaluates `f~(t, x, y, z, gamma) = f - mu(t, x).z - tr(sigma sigma^T(t, x) gamma) / 2` on a batch.

    Args:
        problem: Supplies the generator and the training drift and diffusion.
        t: The time.
        x: The states `(B, d)`.
        y: The values `(B,)`.
        z: The gradients `(B, d)`.
        gamma: The symmetric Hessians `(B, d, d)`.

    Returns:
        The value of `f~` and its partials; `clamped` counts the generator's clamped denominators.
    """
    return _tilde(problem, t, x, y, z, gamma, problem.diffusion(t, x))


def step_map_F(problem: base.ProblemSpec, t: float, x: types.Matrix, y: types.Vector, z: types.Matrix,  # noqa: N802
               gamma: types.Array, h: float, dw: types.Matrix) -> base.GeneratorValue:
    """Evaluates the forward form `F = y - f~(t, x, y, z, gamma) h + z^T sigma(t, x) dw` on a batch.

    Args:
        problem: Supplies the generator and the training drift and diffusion.
        t: The time `t_i`.
        x: The states `X_{t_i}`, `(B, d)`.
        y: The values `(B,)`.
        z: The gradients `(B, d)`.
        gamma: The symmetric Hessians `(B, d, d)`.
        h: The time step `t_{i+1} - t_i`.
        dw: The Brownian increments `(B, d)`.

    Returns:
        The value of `F` and its partials in `(y, z, gamma)`.

    Raises:
        ConfigurationError: If `h` is not positive.
    """
    if not h > 0.0:
        error_message = f"The time step must be positive, got h={h}"
        raise errors.ConfigurationError(error_message)
    sigma = problem.diffusion(t, x)
    tilde = _tilde(problem, t, x, y, z, gamma, sigma)
    noise = np.einsum("bij,bj->bi", sigma, dw)
    return base.GeneratorValue(value=y - tilde.value * h + np.sum(z * noise, axis=1),
                               dy=1.0 - tilde.dy * h, dz=noise - tilde.dz * h, dgamma=-tilde.dgamma * h,
                               clamped=tilde.clamped)
