import numpy as np
import pytest

from fnlbsde.common import errors
from fnlbsde.oracles import riccati
from fnlbsde.problems import linear_quadratic


def _scalar(a=1.0, b=0.0, q=1.0, p=1.0, n_ctrl=1.0, maturity=1.0):
    return riccati.LinearQuadraticParams(a=np.array([[a]]), b=np.array([b]), d=np.array([1.0]), q=np.array([[q]]),
                                         p=np.array([[p]]), n_ctrl=n_ctrl, maturity=maturity)


def test_zero_is_a_fixed_point():
    params = riccati.LinearQuadraticParams(a=np.eye(2), b=np.ones(2), d=np.ones(2), q=np.zeros((2, 2)),
                                           p=np.zeros((2, 2)), n_ctrl=2.0, maturity=1.0)
    solution = riccati.riccati_solve(params, mesh=100)
    np.testing.assert_array_equal(solution.k, 0.0)


def test_uncontrolled_scalar_closed_form():
    solution = riccati.riccati_solve(_scalar())
    # k' = -(2k + 1), k(1) = 1.
    assert solution.at(0.0)[0, 0] == pytest.approx(1.5 * np.e**2 - 0.5, abs=1e-9)
    assert solution.at(0.37)[0, 0] == pytest.approx(1.5 * np.exp(2 * 0.63) - 0.5, abs=1e-9)


def test_terminal_condition_and_symmetry():
    params = linear_quadratic.default_params(3)
    solution = riccati.riccati_solve(params)
    np.testing.assert_array_equal(solution.k[-1], params.p)
    np.testing.assert_array_equal(solution.k, np.swapaxes(solution.k, 1, 2))
    assert np.all(np.linalg.eigvalsh(solution.k) >= -1e-12)


def test_mesh_doubling_agrees():
    params = linear_quadratic.default_params(3)
    coarse = riccati.riccati_solve(params)
    fine = riccati.riccati_solve(params, mesh=2 * riccati.DEFAULT_MESH)
    assert np.linalg.norm(coarse.k[0] - fine.k[0]) < 1e-8


def test_ode_residual_at_midpoints():
    params = linear_quadratic.default_params(2)
    solution = riccati.riccati_solve(params, mesh=2000)
    h = 1e-6
    for t in (solution.times[:-1] + solution.times[1:])[::97] / 2:
        derivative = (solution.at(t + h) - solution.at(t - h)) / (2 * h)
        np.testing.assert_allclose(derivative, riccati.riccati_rhs(solution.at(t), params), atol=1e-8)


def test_coarse_mesh_fails_self_check():
    params = linear_quadratic.default_params(2, maturity=5.0)
    with pytest.raises(errors.RiccatiAccuracyError):
        riccati.riccati_solve(params, mesh=2)


def test_invalid_control_weight():
    with pytest.raises(errors.ConfigurationError):
        riccati.riccati_solve(_scalar(n_ctrl=0.0))


def test_lq_exact():
    params = linear_quadratic.default_params(3)
    solution = riccati.riccati_solve(params)
    origin = riccati.lq_exact(0.2, np.zeros((1, 3)), solution)
    assert origin.u[0] == 0.0
    np.testing.assert_array_equal(origin.z, 0.0)
    np.testing.assert_allclose(origin.gamma[0], 2.0 * solution.at(0.2))
    x = np.array([[1.0, -0.5, 2.0]])
    np.testing.assert_allclose(riccati.lq_exact(1.0, x, solution).u, x[0] @ params.p @ x[0], rtol=1e-12)
