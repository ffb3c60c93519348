"""Shape-checked helpers over float64 numpy arrays.

numpy's ndarray is the tensor type throughout the package; these wrappers add
the strict shape rules the layers rely on (no implicit broadcasting).
"""

import numpy as np

from .errors import EmptyTensor, ShapeMismatch

DTYPE = np.float64


def as_tensor(data, shape=None):
    """Return ``data`` as a C-contiguous float64 array, optionally reshaped."""
    arr = np.ascontiguousarray(data, dtype=DTYPE)
    if shape is not None:
        arr = reshape(arr, shape)
    return arr


def matmul(a, b):
    """Plain 2-D matrix product; raises ShapeMismatch when inner dims differ."""
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatch(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def reshape(t, new_shape):
    t = np.asarray(t)
    new_shape = tuple(int(d) for d in np.atleast_1d(new_shape))
    if any(d <= 0 for d in new_shape) or int(np.prod(new_shape)) != t.size:
        raise ShapeMismatch(f"cannot reshape {t.shape} to {new_shape}")
    return np.ascontiguousarray(t).reshape(new_shape)


def argmax_rows(t):
    """Per-row argmax of a (T, C) array; ties go to the lowest index."""
    t = np.asarray(t)
    if t.ndim != 2:
        raise ShapeMismatch(f"argmax_rows expects a 2-D array, got {t.shape}")
    if t.shape[1] == 0:
        raise EmptyTensor("argmax_rows on a tensor with zero columns")
    # np.argmax returns the first occurrence of the maximum
    return [int(i) for i in np.argmax(t, axis=1)]


def check_same_shape(a, b, what="operands"):
    if a.shape != b.shape:
        raise ShapeMismatch(f"{what}: {a.shape} != {b.shape}")
