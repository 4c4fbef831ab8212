"""Provides common types definitions."""

from typing import Literal

import numpy as np
import numpy.typing as npt

from fnlbsde.common import errors

FLOAT_DTYPE = np.float64
"""Floating point type used by every array in the package (float32 is a build-time option)."""

Array = npt.NDArray[np.floating]
"""A floating point numpy array."""
Vector = Array
"""A 1-D array, or a batch of them with leading batch axis."""
Matrix = Array
"""A 2-D array, or a batch of them with leading batch axis."""

Mode = Literal["explicit", "implicit"]
"""How the Hessian entering the step loss is estimated."""
TruncationVariant = Literal["static", "ou-exponential", "drifted"]
"""Families of truncation operators."""


def as_batch(x: npt.ArrayLike, dim: int) -> Array:
    """Converts the given points to a `(batch, dim)` array.

    Args:
        x: A single point of length `dim` or a batch of points.
        dim: The expected trailing dimension.

    Returns:
        A 2-D array of dtype `FLOAT_DTYPE`.

    Raises:
        ShapeError: If the points do not have trailing dimension `dim`.
    """
    array = np.asarray(x, dtype=FLOAT_DTYPE)
    if array.ndim == 1:
        array = array[None, :]
    if array.ndim != 2 or array.shape[1] != dim:  # noqa: PLR2004
        error_message = f"Expected points of dimension {dim}, got shape {np.shape(x)}"
        raise errors.ShapeError(error_message)
    return array


def symmetrize(gamma: Matrix) -> Matrix:
    """Returns `(gamma + gamma^T) / 2` over the two trailing axes."""
    return 0.5 * (gamma + np.swapaxes(gamma, -1, -2))
