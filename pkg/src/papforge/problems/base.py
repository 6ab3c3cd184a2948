from __future__ import annotations

from typing import Protocol, runtime_checkable

import numpy as np

PROBLEM_CLASSES = ("MMMP", "MKP", "MCCP", "MCIMP")
SPLITS = ("train", "test")


class DimensionMismatch(ValueError):
    pass


@runtime_checkable
class Evaluable(Protocol):
    """Anything a MOEA can optimize: ground-truth instances and NIRs alike.

    ``evaluate`` returns objective values under the maximization convention.
    """

    dim: int
    n_obj: int

    def evaluate(self, X: np.ndarray) -> np.ndarray: ...

    def repair(self, X: np.ndarray) -> np.ndarray: ...

    def is_feasible(self, X: np.ndarray) -> np.ndarray: ...


def as_bits(x, dim: int | None = None) -> np.ndarray:
    """Validate and coerce a bit vector (1-D) or batch of them (2-D) to uint8."""
    arr = np.asarray(x)
    if arr.ndim not in (1, 2):
        raise ValueError(f"expected 1-D or 2-D bits, got shape {arr.shape}")
    if arr.shape[-1] < 1:
        raise ValueError("bit vectors need dim >= 1")
    if arr.dtype != np.uint8:
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("bit vectors may only contain 0 and 1")
        arr = arr.astype(np.uint8)
    elif arr.size and arr.max() > 1:
        raise ValueError("bit vectors may only contain 0 and 1")
    if dim is not None and arr.shape[-1] != dim:
        raise DimensionMismatch(f"expected dim {dim}, got {arr.shape[-1]}")
    return arr


def batched(fn):
    """Let a method written for (B, dim) batches also accept a single vector."""

    def wrapper(self, X, *args, **kwargs):
        X = as_bits(X, self.dim)
        if X.ndim == 1:
            return fn(self, X[None, :], *args, **kwargs)[0]
        return fn(self, X, *args, **kwargs)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def random_bits(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    return rng.integers(0, 2, size=(n, dim), dtype=np.uint8)
