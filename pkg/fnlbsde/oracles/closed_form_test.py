import numpy as np
import pytest

from fnlbsde.oracles import closed_form


@pytest.mark.parametrize("dim", [1, 3, 10])
def test_case1_reference_values(dim):
    x = np.full((1, dim), 0.5 / np.sqrt(dim))
    triple = closed_form.case1_exact(0.0, x, maturity=1.0)
    assert triple.u[0] == pytest.approx(0.761902, abs=1e-6)
    assert np.sqrt(dim) * triple.z[0, 0] == pytest.approx(1.2966, abs=1e-4)
    np.testing.assert_allclose(triple.gamma[0], triple.gamma[0, 0, 0] * np.ones((dim, dim)))


def test_case1_vanishes_at_origin_at_maturity():
    assert closed_form.case1_exact(1.0, np.zeros((1, 4)), maturity=1.0).u[0] == 0.0


def test_monge_ampere_reference_value():
    triple = closed_form.monge_ampere_exact(0.0, np.ones((1, 5)), maturity=1.0)
    assert triple.u[0] == pytest.approx(0.382727, abs=1e-6)
    later = closed_form.monge_ampere_exact(0.25, np.ones((1, 5)), maturity=1.0)
    assert triple.u[0] - later.u[0] == pytest.approx(0.25, abs=1e-15)


@pytest.mark.parametrize(("maturity", "u", "z"), [(1.0, -0.50662, 0.25331), (0.1, -0.59571, 0.29786)])
def test_merton_reference_values(maturity, u, z):
    triple = closed_form.merton_exact(0.0, np.ones((1, 1)), risk_premium=0.6, risk_aversion=0.5, maturity=maturity)
    assert triple.u[0] == pytest.approx(u, abs=1e-5)
    assert triple.z[0, 0] == pytest.approx(z, abs=1e-5)
    assert triple.gamma[0, 0, 0] == pytest.approx(0.25 * triple.u[0], rel=1e-15)


def test_merton_terminal_is_utility():
    x = np.array([[-1.0], [0.0], [2.0]])
    triple = closed_form.merton_exact(1.0, x, risk_premium=0.6, risk_aversion=0.5, maturity=1.0)
    np.testing.assert_allclose(triple.u, -np.exp(-0.5 * x[:, 0]), rtol=1e-15)
