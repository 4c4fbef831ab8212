import numpy as np
import pytest
from scipy import special

from fnlbsde.common import errors, rng
from fnlbsde.sde import normal

_TEST_STREAM = 99


@pytest.mark.parametrize(("p", "expected"), [(0.5, 0.0), (0.975, 1.959964), (0.999, 3.090232), (0.001, -3.090232)])
def test_known_quantiles(p, expected):
    assert normal.inverse_normal_cdf(p) == pytest.approx(expected, abs=1e-6)


def test_round_trip_on_grid():
    p = np.arange(1, 1000) / 1000.0
    quantiles = normal.inverse_normal_cdf(p)
    assert np.max(np.abs(special.ndtr(quantiles) - p)) < 1e-9


def test_extreme_tails():
    p = np.array([1e-200, 1e-16, 1e-8, 1.0 - 1e-8])
    quantiles = normal.inverse_normal_cdf(p)
    np.testing.assert_allclose(quantiles, special.ndtri(p), rtol=1e-9)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_domain(p):
    with pytest.raises(errors.DomainError):
        normal.inverse_normal_cdf(p)


def test_standard_normal_moments():
    draws = normal.standard_normal(rng.stream(1, _TEST_STREAM), (200_000,))
    assert abs(draws.mean()) < 5.0 / np.sqrt(draws.size)
    assert abs(draws.var() - 1.0) < 5.0 * np.sqrt(2.0 / draws.size)


def test_standard_normal_is_reproducible():
    first = normal.standard_normal(rng.stream(4, _TEST_STREAM, 2), (3, 5))
    second = normal.standard_normal(rng.stream(4, _TEST_STREAM, 2), (3, 5))
    np.testing.assert_array_equal(first, second)
