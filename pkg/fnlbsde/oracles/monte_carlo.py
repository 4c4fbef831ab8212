"""Provides an independent Monte Carlo estimate of the factor part of the no-leverage value function."""

import numpy as np

from fnlbsde.common import errors, types
from fnlbsde.oracles import scott
from fnlbsde.sde import normal

MIN_SAMPLES = 1000


def mc_w_estimate(t: float, v: types.Vector, factors: scott.FactorModel, maturity: float, samples: int,
                  generator: np.random.Generator, *, substeps: int = 1000) -> tuple[float, float]:
    """Estimates `w(t, v) = E[exp(-1/2 int_t^T R(V_s) ds)]` for independent OU factors started at `v`.

    The factors follow their exact Gaussian transition on a uniform mesh of `substeps` intervals and
    the time integral is approximated by the trapezoidal rule.

    Args:
        t: The starting time.
        v: The starting factor values, length n.
        factors: The factor coefficients; correlations must be zero.
        maturity: The horizon T.
        samples: The number of Monte Carlo samples, at least 1000.
        generator: The random stream.
        substeps: The number of time intervals.

    Returns:
        The sample mean and its standard error.

    Raises:
        ConfigurationError: If `samples` is too small or a correlation is non-zero.
    """
    if samples < MIN_SAMPLES or substeps < 1:
        error_message = f"Monte Carlo needs at least {MIN_SAMPLES} samples and one substep, got {samples}, {substeps}"
        raise errors.ConfigurationError(error_message)
    if np.any(factors.rho != 0.0):
        error_message = f"The Monte Carlo validator needs zero correlations, got {factors.rho}"
        raise errors.ConfigurationError(error_message)
    dt = (maturity - t) / substeps
    decay = np.exp(-factors.kappa * dt)
    noise = factors.nu * np.sqrt(-np.expm1(-2.0 * factors.kappa * dt) / (2.0 * factors.kappa))
    state = np.tile(np.asarray(v, dtype=types.FLOAT_DTYPE), (samples, 1))
    previous = factors.sharpe_ratio(state)
    integral = np.zeros(samples, dtype=types.FLOAT_DTYPE)
    for _ in range(substeps):
        shocks = normal.standard_normal(generator, (samples, factors.num_factors))
        state = factors.theta + (state - factors.theta) * decay + noise * shocks
        current = factors.sharpe_ratio(state)
        integral += 0.5 * dt * (previous + current)
        previous = current
    values = np.exp(-0.5 * integral)
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(samples))
