"""Provides the Riccati reference solution of the linear-quadratic problem."""

import dataclasses
import functools
import logging

import numpy as np
from scipy import interpolate

from fnlbsde.common import errors, types
from fnlbsde.problems import base

_LOGGER = logging.getLogger(__name__)

DEFAULT_MESH = 10_000
RICHARDSON_TOLERANCE = 1e-7


@dataclasses.dataclass(frozen=True, kw_only=True)
class LinearQuadraticParams:
    """Coefficients of the linear-quadratic control problem."""
    a: types.Matrix
    b: types.Vector
    d: types.Vector
    q: types.Matrix
    p: types.Matrix
    n_ctrl: float
    maturity: float

    @property
    def dim(self) -> int:
        return len(self.b)


def riccati_rhs(k: types.Matrix, params: LinearQuadraticParams) -> types.Matrix:
    """Returns `dK/dt = -(A^T K + K A + Q - K b b^T K / (N + d^T K d))`."""
    kb = k @ params.b
    return -(params.a.T @ k + k @ params.a + params.q - np.outer(kb, kb) / (params.n_ctrl + params.d @ k @ params.d))


@dataclasses.dataclass(frozen=True)
class RiccatiSolution:
    """The matrices `K(t)` on an ascending time mesh, interpolated by cubic Hermite splines."""
    times: types.Vector
    k: types.Array
    """`K(t_j)`, shaped `(M + 1, d, d)`."""
    rhs: types.Array
    """`dK/dt(t_j)`, shaped `(M + 1, d, d)`."""

    @property
    def dim(self) -> int:
        return self.k.shape[1]

    @functools.cached_property
    def _spline(self) -> interpolate.CubicHermiteSpline:
        return interpolate.CubicHermiteSpline(self.times, self.k.reshape(len(self.times), -1),
                                              self.rhs.reshape(len(self.times), -1))

    def at(self, t: float) -> types.Matrix:
        """Returns `K(t)`, symmetric."""
        k = self._spline(t).reshape(self.dim, self.dim)
        return types.symmetrize(k)


def _integrate(params: LinearQuadraticParams, mesh: int) -> RiccatiSolution:
    h = params.maturity / mesh
    k = np.array(params.p, dtype=types.FLOAT_DTYPE)
    ks = [k]
    for _ in range(mesh):
        k1 = riccati_rhs(k, params)
        k2 = riccati_rhs(k - 0.5 * h * k1, params)
        k3 = riccati_rhs(k - 0.5 * h * k2, params)
        k4 = riccati_rhs(k - h * k3, params)
        k = types.symmetrize(k - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        ks.append(k)
    k_path = np.stack(ks[::-1])
    times = params.maturity * np.arange(mesh + 1, dtype=types.FLOAT_DTYPE) / mesh
    rhs = np.stack([riccati_rhs(matrix, params) for matrix in k_path])
    return RiccatiSolution(times=times, k=k_path, rhs=rhs)


def riccati_solve(params: LinearQuadraticParams, mesh: int = DEFAULT_MESH) -> RiccatiSolution:
    """Integrates the Riccati matrix ODE backward from `K(T) = P` with classical RK4.

    The result is checked against a second integration on the doubled mesh.

    Args:
        params: The problem coefficients.
        mesh: The number of RK4 steps.

    Returns:
        The `RiccatiSolution` on the requested mesh.

    Raises:
        ConfigurationError: If `n_ctrl` is not positive or `mesh` < 1.
        RiccatiAccuracyError: If the two meshes disagree on `K(0)` by more than 1e-7 (Frobenius).
    """
    if not params.n_ctrl > 0.0 or mesh < 1:
        error_message = f"Invalid Riccati setup: N={params.n_ctrl}, mesh={mesh}"
        raise errors.ConfigurationError(error_message)
    solution = _integrate(params, mesh)
    refined = _integrate(params, 2 * mesh)
    discrepancy = float(np.linalg.norm(solution.k[0] - refined.k[0]))
    _LOGGER.debug("Riccati mesh %d: K(0) discrepancy %.3g against the doubled mesh", mesh, discrepancy)
    if not discrepancy <= RICHARDSON_TOLERANCE:
        error_message = f"Riccati integration with mesh {mesh} is inaccurate: discrepancy {discrepancy:.3g}"
        raise errors.RiccatiAccuracyError(error_message)
    return solution


def lq_exact(t: float, x: types.Matrix, solution: RiccatiSolution) -> base.Triple:
    """Returns `u = x^T K(t) x`, `z = 2 K(t) x`, `gamma = 2 K(t)`."""
    k = solution.at(t)
    u = np.einsum("bi,ij,bj->b", x, k, x)
    gamma = np.broadcast_to(2.0 * k, (x.shape[0], *k.shape)).copy()
    return base.Triple(u=u, z=2.0 * x @ k, gamma=gamma)
