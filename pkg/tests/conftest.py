import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))


def random_labels(rng, T, k, max_run=12):
    """Piecewise-constant label sequence of length T over k classes."""
    out = []
    while len(out) < T:
        out += [int(rng.integers(k))] * int(rng.integers(1, max_run + 1))
    return np.array(out[:T], dtype=np.int64)


def perturbed(rng, gt, k):
    """A plausible prediction: gt with shifted boundaries, relabeled runs and noise."""
    pred = gt.copy()
    T = len(gt)
    mode = rng.integers(3)
    if mode == 0:
        return random_labels(rng, T, k)
    if mode == 1:
        shift = int(rng.integers(-3, 4))
        pred = np.roll(pred, shift)
    flips = rng.random(T) < 0.1
    pred[flips] = rng.integers(k, size=int(flips.sum()))
    return pred


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
