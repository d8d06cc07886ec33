import numpy as np
import pytest

from mstcar.rng import RngStream


def test_identical_keys_reproduce_bitwise():
    a = RngStream(123, (4, 7)).generator().standard_normal(1000)
    b = RngStream(123, (4, 7)).generator().standard_normal(1000)
    assert np.array_equal(a, b)


def test_substream_extends_key():
    s = RngStream(9)
    assert s.substream(1, 2).key == (1, 2)
    assert s.substream(1).substream(2).key == (1, 2)


def test_distinct_keys_differ():
    a = RngStream(1, (0,)).generator().standard_normal(100)
    b = RngStream(1, (1,)).generator().standard_normal(100)
    assert not np.array_equal(a, b)


def test_negative_key_rejected():
    with pytest.raises(ValueError):
        RngStream(1, (-1,))


def test_stream_independence_correlation():
    n = 200_000
    base = RngStream(2024)
    x = base.substream(0).generator().standard_normal(n)
    y = base.substream(1).generator().standard_normal(n)
    r = np.corrcoef(x, y)[0, 1]
    assert abs(r) < 4.0 / np.sqrt(n)


def test_generator_restarts_at_origin():
    s = RngStream(5, (3,))
    first = s.generator().standard_normal(10)
    again = s.generator().standard_normal(10)
    assert np.array_equal(first, again)
