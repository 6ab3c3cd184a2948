"""Bi-objective 0/1 knapsack with a cumulative-weight repair operator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from papforge.problems.base import as_bits, batched

P_RANGES = {"train": (0.6, 0.75), "test": (0.65, 0.8)}
W_MAX_FRACTION = 0.5


@dataclass(eq=False)
class MKPInstance:
    weights: np.ndarray
    values: np.ndarray  # (dim, 2)
    w_max: float
    split_p: float = 0.7
    split: str = "train"
    seed: int = 0
    problem_class: str = field(default="MKP", init=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.weights.shape[0], 2):
            raise ValueError("values must have shape (dim, 2)")
        self.w_max = float(self.w_max)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    n_obj = 2

    @batched
    def evaluate(self, X):
        return X.astype(np.float64) @ self.values

    @batched
    def repair(self, X):
        """Zero every item from the first index whose cumulative weight exceeds w_max."""
        cum = np.cumsum(X * self.weights, axis=1)
        over = cum > self.w_max + 1e-12
        # once violated, stay violated: the scan stops including items
        cut = np.cumsum(over, axis=1) > 0
        return np.where(cut, 0, X).astype(np.uint8)

    @batched
    def is_feasible(self, X):
        return X @ self.weights <= self.w_max + 1e-9

    def validate(self) -> None:
        order = np.argsort(self.weights)
        for j in range(2):
            v = self.values[order, j]
            if not np.all(np.diff(v) > 0):
                raise ValueError("monotone weight/value link violated")
        if not 0 < self.w_max < self.weights.sum():
            raise ValueError("w_max must lie strictly between 0 and the total weight")

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "values": self.values.tolist(),
                "w_max": self.w_max, "split_p": self.split_p}

    @classmethod
    def from_dict(cls, d: dict, split: str, seed: int) -> "MKPInstance":
        return cls(weights=np.array(d["weights"]), values=np.array(d["values"]),
                   w_max=d["w_max"], split_p=d["split_p"], split=split, seed=seed)


def _two_band(rng, n: int, cut: float) -> np.ndarray:
    low = n // 2
    vals = np.concatenate([rng.uniform(0.0, cut, size=low), rng.uniform(cut, 1.0, size=n - low)])
    return np.sort(vals)


def generate(dim: int, split: str, rng: np.random.Generator, seed: int,
             w_max_fraction: float = W_MAX_FRACTION) -> MKPInstance:
    lo, hi = P_RANGES[split]
    p = float(rng.uniform(lo, hi))
    weights = np.sort(1.0 - rng.uniform(0.0, 1.0, size=dim))  # (0, 1]
    v1 = _two_band(rng, dim, p)
    v2 = _two_band(rng, dim, 1.0 - p)
    # joint shuffle keeps the weight-rank link but decouples index order from weight
    perm = rng.permutation(dim)
    return MKPInstance(weights=weights[perm], values=np.stack([v1, v2], axis=1)[perm],
                       w_max=w_max_fraction * weights.sum(), split_p=p, split=split, seed=seed)
