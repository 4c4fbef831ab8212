import numpy as np

from fnlbsde.common import rng

_TEST_STREAM = 99


def test_same_key_gives_same_draws():
    first = rng.stream(7, rng.Purpose.TRAIN, 3, 11).standard_normal(5)
    rng.stream(7, rng.Purpose.TRAIN, 3, 12).standard_normal(100)
    second = rng.stream(7, rng.Purpose.TRAIN, 3, 11).standard_normal(5)
    np.testing.assert_array_equal(first, second)


def test_keys_separate_streams():
    draws = [
        rng.stream(7, rng.Purpose.TRAIN, 3, 11).standard_normal(4),
        rng.stream(8, rng.Purpose.TRAIN, 3, 11).standard_normal(4),
        rng.stream(7, rng.Purpose.VALIDATION, 3, 11).standard_normal(4),
        rng.stream(7, rng.Purpose.TRAIN, 3, 12).standard_normal(4),
        rng.stream(7, rng.Purpose.TRAIN, 3).standard_normal(4),
    ]
    assert len({tuple(draw) for draw in draws}) == len(draws)


def test_raw_stream_ids_are_separate_from_run_purposes():
    assert "TEST" not in rng.Purpose.__members__
    assert _TEST_STREAM not in set(rng.Purpose)
    raw = rng.stream(7, _TEST_STREAM, 3).standard_normal(4)
    np.testing.assert_array_equal(raw, rng.stream(7, _TEST_STREAM, 3).standard_normal(4))
    for purpose in rng.Purpose:
        assert not np.array_equal(raw, rng.stream(7, purpose, 3).standard_normal(4))


def test_uniform_open_stays_inside_the_unit_interval():
    u = rng.uniform_open(rng.stream(0, _TEST_STREAM), (10_000,))
    assert u.shape == (10_000,)
    assert (u > 0.0).all()
    assert (u < 1.0).all()
    assert abs(u.mean() - 0.5) < 0.02
