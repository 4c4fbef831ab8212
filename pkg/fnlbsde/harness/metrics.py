"""Provides the statistics reported over independent runs."""

import numpy as np


def mean_and_std(*, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Calculates the mean and the (population) standard deviation over the leading axis.

    Args:
        values: A numpy array whose leading axis indexes the runs.

    Returns:
        The mean and the standard deviation, `ddof=0`, so a single run has deviation 0.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[0] == 0:
        nan = np.full(values.shape[1:], np.nan)
        return nan, nan.copy()
    return values.mean(axis=0), values.std(axis=0, ddof=0)


def relative_error(*, estimate: np.ndarray | float, reference: np.ndarray | float | None) -> np.ndarray:
    """Calculates `|estimate - reference| / |reference|`.

    Args:
        estimate: The estimate, usually a mean over runs.
        reference: The reference value, or None when there is none.

    Returns:
        The relative error; NaN where the reference is missing or zero.
    """
    estimate = np.asarray(estimate, dtype=float)
    if reference is None:
        return np.full(estimate.shape, np.nan)
    reference = np.asarray(reference, dtype=float)
    scale = np.abs(reference)
    output = np.full(np.broadcast(estimate, reference).shape, np.nan)
    return np.divide(np.abs(estimate - reference), scale, out=output, where=scale > 0)
