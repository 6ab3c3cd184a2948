"""Variation operators on uint8 bit matrices."""

from __future__ import annotations

import numpy as np


def initialize(scheme: str, n: int, dim: int, rng: np.random.Generator, bias: float = 0.5) -> np.ndarray:
    if scheme == "uniform":
        return rng.integers(0, 2, size=(n, dim), dtype=np.uint8)
    if scheme == "stratified":
        # one-bit density stratified across the population, from sparse to dense
        dens = (np.arange(n) + rng.random(n)) / n
        rng.shuffle(dens)
        return (rng.random((n, dim)) < dens[:, None]).astype(np.uint8)
    if scheme == "biased":
        return (rng.random((n, dim)) < bias).astype(np.uint8)
    raise ValueError(f"unknown init scheme {scheme!r}")


def crossover(A: np.ndarray, B: np.ndarray, kind: str, rate: float, rng: np.random.Generator):
    """Recombine parent rows pairwise; returns two child matrices."""
    n, dim = A.shape
    C1, C2 = A.copy(), B.copy()
    if kind == "none" or n == 0:
        return C1, C2
    do = rng.random(n) < rate
    if kind == "uniform":
        swap = (rng.random((n, dim)) < 0.5) & do[:, None]
    elif kind == "one-point":
        cut = rng.integers(1, max(dim, 2), size=n)
        swap = (np.arange(dim)[None, :] >= cut[:, None]) & do[:, None]
    elif kind == "two-point":
        a = rng.integers(0, dim + 1, size=n)
        b = rng.integers(0, dim + 1, size=n)
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        j = np.arange(dim)[None, :]
        swap = (j >= lo[:, None]) & (j < hi[:, None]) & do[:, None]
    else:
        raise ValueError(f"unknown crossover {kind!r}")
    C1[swap] = B[swap]
    C2[swap] = A[swap]
    return C1, C2


def bitflip(X: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    if rate <= 0:
        return X
    flip = rng.random(X.shape) < rate
    return X ^ flip.astype(np.uint8)


def tournament(merit: np.ndarray, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of ``n`` tournament winners; lower merit wins."""
    draws = rng.integers(0, len(merit), size=(n, size))
    return draws[np.arange(n), np.argmin(merit[draws], axis=1)]


def neighborhood_pairs(neighbors: np.ndarray, centers: np.ndarray, prob: float, pool_size: int,
                       rng: np.random.Generator):
    """Two parents per center: from its neighbour list with probability ``prob``, else from the pool."""
    n = len(centers)
    local = rng.random(n) < prob
    T = neighbors.shape[1]
    pick = neighbors[centers[:, None], rng.integers(0, T, size=(n, 2))]
    anywhere = rng.integers(0, pool_size, size=(n, 2))
    both = np.where(local[:, None], pick, anywhere)
    return both[:, 0], both[:, 1], local
