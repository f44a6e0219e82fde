import numpy as np
import pytest

from ssagan.action_code import decode, decode_batch, encode, encode_batch, normalize, to_bytes
from ssagan.errors import ConfigurationError


def test_encode_examples():
    assert encode(3, 7).tolist() == [0, 0, 0, 255, 0, 0, 0]
    assert encode(5, 7).tolist() == [0, 0, 0, 0, 0, 255, 0]
    assert encode(0, 2).tolist() == [255, 0]


def test_encode_errors():
    with pytest.raises(IndexError):
        encode(7, 7)
    with pytest.raises(ConfigurationError):
        encode(0, 1)
    with pytest.raises(IndexError):
        encode_batch([0, 3], 3)


def test_decode_examples():
    assert decode([0, 0, 0, 0, 0, 255, 0]) == 5
    assert decode([0.1, 0.7, 0.2]) == 1
    assert decode([4.0, 4.0, 4.0]) == 0


def test_round_trip_exhaustive():
    for k in range(2, 65):
        for c in range(k):
            code = encode(c, k)
            assert decode(code) == c
            assert np.abs(code).sum() == 255.0
            assert decode(code * 0.37) == c


def test_batch_forms():
    labels = np.array([0, 2, 1, 2])
    internal = encode_batch(labels, 3)
    assert np.array_equal(internal.sum(axis=1), np.ones(4))
    assert np.array_equal(decode_batch(internal), labels)
    assert np.array_equal(encode_batch(labels, 3, internal=False), internal * 255)


def test_normalize():
    assert normalize([255, 0], "to_internal").tolist() == [1.0, 0.0]
    assert normalize([1.0, 0.0], "to_external").tolist() == [255.0, 0.0]
    x = np.random.default_rng(0).random(10)
    assert np.max(np.abs(normalize(normalize(x, "to_external"), "to_internal") - x)) < 1e-12
    with pytest.raises(ValueError):
        normalize(x, "sideways")


def test_to_bytes():
    b = to_bytes(normalize([0.999, 0.2, 0.0], "to_external"))
    assert b.dtype == np.uint8 and b.tolist() == [255, 51, 0]
