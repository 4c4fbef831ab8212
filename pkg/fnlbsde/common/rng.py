"""Provides counter-based random streams keyed by (seed, purpose, indices)."""

import enum
from collections.abc import Sequence

import numpy as np

from fnlbsde.common import types

_UNIFORM_BITS = 52


class Purpose(enum.IntEnum):
    """Tags separating the random streams consumed by different parts of a run."""
    INIT = 1
    TRAIN = 2
    VALIDATION = 3
    TERMINAL_FIT = 4
    MONTE_CARLO = 5


def stream(seed: int, purpose: Purpose | int, *indices: int) -> np.random.Generator:
    """Returns an independent Philox stream for the given key.

    Two calls with the same arguments return generators producing identical draws,
    independently of how many other streams were created in between.

    Args:
        seed: The run seed.
        purpose: What the draws are used for; a plain int gives a stream outside the purposes of a run.
        *indices: Further non-negative indices (time step, iteration, ...).

    Returns:
        A `numpy.random.Generator` backed by a counter-based Philox bit generator.
    """
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(int(purpose), *indices))
    return np.random.Generator(np.random.Philox(sequence))


def uniform_open(rng: np.random.Generator, shape: Sequence[int]) -> types.Array:
    """Draws uniforms on the open interval (0, 1).

    Args:
        rng: The generator to draw from.
        shape: The output shape.

    Returns:
        An array whose entries are `(k + 1/2) / 2**52` for uniform integers `k`.
    """
    k = rng.integers(0, 2**_UNIFORM_BITS, size=tuple(shape), dtype=np.int64)
    return ((k + 0.5) / 2.0**_UNIFORM_BITS).astype(types.FLOAT_DTYPE)
