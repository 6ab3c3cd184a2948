"""Multi-objective match max: maximize agreement with several reference vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from papforge.problems.base import as_bits, batched

MAX_RETRIES = 10_000


class InfeasibleGeneration(ValueError):
    pass


@dataclass(eq=False)
class MMMPInstance:
    refs: np.ndarray  # (n_obj, dim) uint8
    split: str = "train"
    seed: int = 0
    problem_class: str = field(default="MMMP", init=False)

    def __post_init__(self):
        self.refs = as_bits(self.refs)
        if self.refs.ndim != 2:
            raise ValueError("refs must be an (n_obj, dim) array")

    @property
    def dim(self) -> int:
        return self.refs.shape[1]

    @property
    def n_obj(self) -> int:
        return self.refs.shape[0]

    @batched
    def evaluate(self, X):
        # f_j = dim - hamming(x, r_j)
        mismatches = (X[:, None, :] != self.refs[None, :, :]).sum(axis=2)
        return (self.dim - mismatches).astype(np.float64)

    def repair(self, X):
        return as_bits(X, self.dim)

    def is_feasible(self, X):
        X = as_bits(X, self.dim)
        return np.ones(X.shape[:-1], dtype=bool) if X.ndim == 2 else np.bool_(True)

    def validate(self) -> None:
        d = self.pairwise_distances()
        iu = np.triu_indices(self.n_obj, 1)
        if not np.all(d[iu] > self.dim / self.n_obj):
            raise ValueError("reference vectors violate the pairwise Hamming distance constraint")

    def pairwise_distances(self) -> np.ndarray:
        return (self.refs[:, None, :] != self.refs[None, :, :]).sum(axis=2)

    def to_dict(self) -> dict:
        return {"refs": self.refs.tolist()}

    @classmethod
    def from_dict(cls, d: dict, split: str, seed: int) -> "MMMPInstance":
        return cls(refs=np.array(d["refs"], dtype=np.uint8), split=split, seed=seed)


def generate(dim: int, split: str, rng: np.random.Generator, seed: int, n_obj: int = 3) -> MMMPInstance:
    threshold = dim / n_obj
    for _ in range(MAX_RETRIES):
        refs = rng.integers(0, 2, size=(n_obj, dim), dtype=np.uint8)
        d = (refs[:, None, :] != refs[None, :, :]).sum(axis=2)
        if np.all(d[np.triu_indices(n_obj, 1)] > threshold):
            return MMMPInstance(refs=refs, split=split, seed=seed)
    raise InfeasibleGeneration(
        f"no {n_obj} reference vectors of dim {dim} with pairwise distance > {threshold:.3g} "
        f"after {MAX_RETRIES} tries")
