"""Shape-checked tensor construction and indexing helpers.

Tensors are plain float64 numpy arrays in row-major (C) order; these helpers
enforce the shape contracts the layers rely on.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ShapeError
from .rng import Rng


def check_shape(shape: Sequence[int]) -> tuple:
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0:
        raise ShapeError("shape must have at least one extent")
    for s in shape:
        if s < 1:
            raise ShapeError(f"extents must be >= 1, got {shape}")
    return shape


def tensor_new(shape: Sequence[int], fill: float = 0.0) -> np.ndarray:
    """New row-major float64 tensor with every element == fill."""
    return np.full(check_shape(shape), float(fill), dtype=np.float64)


def rng_normal(rng: Rng, mean: float, std: float, shape: Sequence[int]) -> np.ndarray:
    """Tensor of i.i.d. normal draws; deterministic given the rng state."""
    shape = check_shape(shape)
    n = int(np.prod(shape))
    return rng.normal(mean, std, n).reshape(shape)


def flatten_index(index: Sequence[int], shape: Sequence[int]) -> int:
    """Row-major flat offset of a multi-index."""
    shape = check_shape(shape)
    if len(index) != len(shape):
        raise ShapeError(f"index rank {len(index)} != shape rank {len(shape)}")
    flat = 0
    for i, s in zip(index, shape):
        if not 0 <= i < s:
            raise ShapeError(f"index {tuple(index)} out of bounds for shape {shape}")
        flat = flat * s + i
    return flat


def unflatten_index(flat: int, shape: Sequence[int]) -> tuple:
    """Inverse of flatten_index."""
    shape = check_shape(shape)
    total = int(np.prod(shape))
    if not 0 <= flat < total:
        raise ShapeError(f"flat index {flat} out of bounds for shape {shape}")
    out = []
    for s in reversed(shape):
        out.append(flat % s)
        flat //= s
    return tuple(reversed(out))
