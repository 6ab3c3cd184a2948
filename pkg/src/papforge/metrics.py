"""Pareto dominance, exact hypervolume (2 and 3 objectives) and normalized performance.

Everything here uses the maximization convention: a reference point is a
componentwise lower bound and hypervolume measures the region between the
reference point and the front.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from papforge.problems.base import random_bits


class DegenerateReference(ValueError):
    """The reference front has zero hypervolume, so normalization is undefined."""


def _as_points(points) -> np.ndarray:
    P = np.asarray(points, dtype=np.float64)
    if P.ndim == 1:
        P = P[None, :]
    if P.ndim != 2:
        raise ValueError("points must be a (n, n_obj) array")
    return P


def dominates(a, b) -> bool:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"objective vectors differ in length: {a.shape} vs {b.shape}")
    return bool(np.all(a >= b) and np.any(a > b))


def nondominated_mask(points, chunk: int = 512) -> np.ndarray:
    """Boolean mask of points not dominated by any other point.

    Equal points do not dominate each other, so duplicates survive together.
    """
    P = _as_points(points)
    n, m = P.shape
    if n == 0:
        raise ValueError("pareto_filter needs at least one point")
    if m == 2:
        return _mask_2d(P)
    keep = np.ones(n, dtype=bool)
    for s in range(0, n, chunk):
        blk = P[s:s + chunk]
        ge = np.all(P[None, :, :] >= blk[:, None, :], axis=2)
        gt = np.any(P[None, :, :] > blk[:, None, :], axis=2)
        keep[s:s + chunk] = ~np.any(ge & gt, axis=1)
    return keep


def _mask_2d(P: np.ndarray) -> np.ndarray:
    # sort by f1 desc, f2 desc: a point is dominated iff some earlier point has
    # f2 strictly greater, or equal f2 with strictly greater f1
    order = np.lexsort((-P[:, 1], -P[:, 0]))
    x, y = P[order, 0], P[order, 1]
    keep_sorted = np.ones(len(order), dtype=bool)
    best_y = -np.inf
    best_x_at_best_y = -np.inf
    for i in range(len(order)):
        if y[i] < best_y or (y[i] == best_y and x[i] < best_x_at_best_y):
            keep_sorted[i] = False
        if y[i] > best_y:
            best_y, best_x_at_best_y = y[i], x[i]
    mask = np.empty(len(order), dtype=bool)
    mask[order] = keep_sorted
    return mask


def pareto_filter(points) -> np.ndarray:
    P = _as_points(points)
    return P[nondominated_mask(P)]


def _hv2d(xy: np.ndarray, ref: np.ndarray) -> float:
    order = np.argsort(-xy[:, 0], kind="stable")
    x, y = xy[order, 0], xy[order, 1]
    top = np.maximum.accumulate(np.concatenate([[ref[1]], y]))
    return float(np.sum((x - ref[0]) * np.diff(top)))


def hypervolume(points, ref) -> float:
    """Exact dominated hypervolume for 2 or 3 objectives.

    Dominated points are allowed and contribute nothing.
    """
    P = _as_points(points)
    ref = np.asarray(ref, dtype=np.float64)
    if P.shape[0] == 0:
        return 0.0
    m = P.shape[1]
    if ref.shape != (m,):
        raise ValueError("reference point length must equal the number of objectives")
    if m > 3 or m < 1:
        raise ValueError(f"hypervolume supports 1 to 3 objectives, got {m}")
    if np.any(P < ref):
        raise ValueError("a point lies below the reference point")
    if m == 1:
        return float(P[:, 0].max() - ref[0])
    if m == 2:
        return _hv2d(P, ref)
    P = pareto_filter(P)
    order = np.argsort(-P[:, 2], kind="stable")
    P = P[order]
    z = np.concatenate([P[:, 2], [ref[2]]])
    total = 0.0
    for i in range(len(P)):
        depth = z[i] - z[i + 1]
        if depth > 0:
            total += _hv2d(P[:i + 1, :2], ref[:2]) * depth
    return total


def init_reference(evaluable, n_samples: int = 100_000, seed: int = 0, batch: int = 4096) -> np.ndarray:
    """Componentwise minimum over random repaired solutions."""
    rng = np.random.default_rng(seed)
    ref = None
    for s in range(0, n_samples, batch):
        X = evaluable.repair(random_bits(rng, min(batch, n_samples - s), evaluable.dim))
        lo = np.asarray(evaluable.evaluate(X)).min(axis=0)
        ref = lo if ref is None else np.minimum(ref, lo)
    return ref


def update_reference(ref, observed) -> np.ndarray:
    ref = np.asarray(ref, dtype=np.float64)
    obs = np.asarray(observed, dtype=np.float64)
    if obs.shape[-1] != ref.shape[-1]:
        raise ValueError("objective count mismatch")
    if obs.ndim == 2:
        obs = obs.min(axis=0)
    return np.minimum(ref, obs)


def normalized_performance(hv_p: float, hv_ref: float) -> float:
    if not hv_ref > 0:
        raise DegenerateReference(f"reference hypervolume must be positive, got {hv_ref}")
    return hv_p / hv_ref


@dataclass
class ReferenceParetoSet:
    """Nondominated front of random samples; its HV is the normalizer."""

    points: np.ndarray

    @classmethod
    def sample(cls, evaluable, n_samples: int = 5000, seed: int = 0) -> "ReferenceParetoSet":
        rng = np.random.default_rng(seed)
        X = evaluable.repair(random_bits(rng, n_samples, evaluable.dim))
        F = np.asarray(evaluable.evaluate(X), dtype=np.float64)
        return cls(pareto_filter(F))

    def lower_corner(self) -> np.ndarray:
        return self.points.min(axis=0)

    def hv(self, ref) -> float:
        h = hypervolume(self.points, ref)
        if not h > 0:
            raise DegenerateReference("reference Pareto set has zero hypervolume")
        return h
