"""Provides the closed-form reference solutions of the case-1, Monge-Ampere and Merton problems."""

import numpy as np

from fnlbsde.common import types
from fnlbsde.problems import base


def _rank_one(coefficient: types.Vector, dim: int) -> types.Array:
    return coefficient[:, None, None] * np.ones((dim, dim), dtype=types.FLOAT_DTYPE)


def case1_exact(t: float, x: types.Matrix, maturity: float) -> base.Triple:
    """Returns `u = tanh(s) exp((T - t) / 2)` with `s = sum(x) / sqrt(d)`, and its derivatives."""
    dim = x.shape[1]
    tanh = np.tanh(x.sum(axis=1) / np.sqrt(dim))
    growth = np.exp(0.5 * (maturity - t))
    u = tanh * growth
    z = np.repeat(((1.0 - tanh**2) * growth / np.sqrt(dim))[:, None], dim, axis=1)
    gamma = _rank_one(-2.0 * tanh * (1.0 - tanh**2) * growth / dim, dim)
    return base.Triple(u=u, z=z, gamma=gamma)


def monge_ampere_exact(t: float, x: types.Matrix, maturity: float) -> base.Triple:
    """Returns `u = cos(sum(x) / sqrt(d)) + T - t` and its derivatives."""
    dim = x.shape[1]
    s = x.sum(axis=1) / np.sqrt(dim)
    u = np.cos(s) + maturity - t
    z = np.repeat((-np.sin(s) / np.sqrt(dim))[:, None], dim, axis=1)
    gamma = _rank_one(-np.cos(s) / dim, dim)
    return base.Triple(u=u, z=z, gamma=gamma)


def merton_exact(t: float, x: types.Matrix, *, risk_premium: float, risk_aversion: float,
                 maturity: float) -> base.Triple:
    """Returns `u = -exp(-(T - t) lambda^2 / 2) exp(-eta x)` and its derivatives."""
    u = -np.exp(-0.5 * (maturity - t) * risk_premium**2 - risk_aversion * x[:, 0])
    return base.Triple(u=u, z=(-risk_aversion * u)[:, None], gamma=(risk_aversion**2 * u)[:, None, None])
