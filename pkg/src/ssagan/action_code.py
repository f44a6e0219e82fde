"""
Action codes: the 1 x k scaled one-hot target the generator learns to emit.

Stored/displayed codes live in [0, 255]; the networks see them divided by
255 so that a sigmoid output can match them.  Class 0 is background.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError

CODE_MAX = 255.0


def _check_k(k):
    if int(k) != k or k < 2:
        raise ConfigurationError(f"action codes need k >= 2 classes, got {k}")


def encode(class_index, k):
    """External-form code for ``class_index``: 255 at that slot, 0 elsewhere."""
    _check_k(k)
    if not 0 <= class_index < k:
        raise IndexError(f"class index {class_index} out of range for k={k}")
    code = np.zeros(k, dtype=np.float64)
    code[class_index] = CODE_MAX
    return code


def encode_batch(labels, k, internal=True):
    """Codes for a vector of labels, one row each."""
    _check_k(k)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise IndexError(f"labels out of range for k={k}")
    codes = np.zeros((labels.size, k), dtype=np.float64)
    codes[np.arange(labels.size), labels] = 1.0 if internal else CODE_MAX
    return codes


def decode(code):
    """Class index of a code (argmax; ties go to the lowest index)."""
    return int(np.argmax(np.asarray(code)))


def decode_batch(codes):
    return np.argmax(np.asarray(codes), axis=-1)


def normalize(code, direction):
    code = np.asarray(code, dtype=np.float64)
    if direction == "to_internal":
        return code / CODE_MAX
    if direction == "to_external":
        return code * CODE_MAX
    raise ValueError(f"direction must be 'to_internal' or 'to_external', got {direction!r}")


def to_bytes(codes):
    """Quantize external-form codes to uint8 for storage."""
    return np.clip(np.rint(np.asarray(codes)), 0, 255).astype(np.uint8)
