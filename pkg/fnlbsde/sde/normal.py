"""Provides the standard normal quantile function and Gaussian sampling by inversion."""

import numpy as np
import numpy.typing as npt
from scipy import special

from fnlbsde.common import errors, rng, types

# Rational approximation coefficients for the central region and the tails.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00, 3.754408661907416e00)
_P_LOW = 0.02425
_SQRT_2PI = np.sqrt(2.0 * np.pi)


def _tail(q: types.Array) -> types.Array:
    numerator = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
    denominator = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
    return numerator / denominator


def _central(q: types.Array) -> types.Array:
    r = q * q
    numerator = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
    denominator = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    return numerator / denominator


def inverse_normal_cdf(p: npt.ArrayLike) -> types.Array | float:
    """Computes the standard normal quantile `Phi^{-1}(p)`.

    A rational approximation is refined with one Newton step on the erfc-based CDF. The
    residual of the upper half is taken on the complement `1 - p` to avoid cancellation.

    Args:
        p: Probabilities in the open interval (0, 1), scalar or array.

    Returns:
        The quantiles, a float for scalar input.

    Raises:
        DomainError: If any probability lies outside (0, 1).
    """
    probabilities = np.asarray(p, dtype=types.FLOAT_DTYPE)
    if np.any(~((probabilities > 0.0) & (probabilities < 1.0))):
        error_message = f"Probabilities must lie in (0, 1), got {p}"
        raise errors.DomainError(error_message)
    lower = np.minimum(probabilities, 1.0 - probabilities)
    upper_half = probabilities > 0.5  # noqa: PLR2004
    x = np.where(lower < _P_LOW, _tail(np.sqrt(-2.0 * np.log(lower))), _central(lower - 0.5))
    # x approximates the non-positive quantile of `lower`; refine on Phi(x) = lower.
    residual = 0.5 * special.erfc(-x / np.sqrt(2.0)) - lower
    x = x - residual * _SQRT_2PI * np.exp(0.5 * x * x)
    quantile = np.where(upper_half, -x, x)
    if np.ndim(p) == 0:
        return float(quantile)
    return quantile


def standard_normal(generator: np.random.Generator, shape: tuple[int, ...]) -> types.Array:
    """Draws standard normals by inverting open-interval uniforms."""
    return np.asarray(inverse_normal_cdf(rng.uniform_open(generator, shape)), dtype=types.FLOAT_DTYPE)
