"""A trained NIR as an evaluable problem: bit strings in, objective vectors out."""

from __future__ import annotations

import hashlib

import numpy as np

from papforge.nir import model as M
from papforge.problems.base import as_bits


class NIR:
    """Shared weights plus one 32-value embedding and the target scaler of its source instance.

    Constraint handling is delegated to ``repairer`` (normally the instance the
    NIR was trained on), so MOEAs see the same feasible region.
    """

    def __init__(self, shared: M.SharedWeights, embedding, dim: int, target_mean, target_std, repairer=None,
                 instance_id: str = "nir", problem_class: str = "", parent_id: str | None = None):
        self.shared = shared
        e = np.array(embedding, dtype=shared.dtype).reshape(-1)
        if e.shape != (M.EMBED_DIM,) or not np.all(np.isfinite(e)):
            raise ValueError(f"embedding must be {M.EMBED_DIM} finite values")
        e.setflags(write=False)
        self.embedding = e
        self.dim = int(dim)
        self.target_mean = np.asarray(target_mean, dtype=np.float64)
        self.target_std = np.asarray(target_std, dtype=np.float64)
        self.repairer = repairer
        self.instance_id = instance_id
        self.problem_class = problem_class or getattr(repairer, "problem_class", "")
        self.parent_id = parent_id
        self._w = None

    @property
    def n_obj(self) -> int:
        return self.shared.n_obj

    def scorer(self) -> dict:
        if self._w is None:
            self._w = M.scorer_weights(self.shared, self.embedding)
        return self._w

    def predict_standardized(self, X) -> np.ndarray:
        X = as_bits(X)
        single = X.ndim == 1
        X2 = X[None, :] if single else X
        if not 1 <= X2.shape[1] <= M.MAX_LEN:
            raise ValueError(f"bit strings must have length 1..{M.MAX_LEN}")
        C = self.shared.encode_cached(X2)
        y, _ = M.scorer_forward(self.scorer(), C)
        return y[0] if single else y

    def evaluate(self, X) -> np.ndarray:
        """Predicted objectives (maximization convention, original units); any length 1..128."""
        y = self.predict_standardized(X).astype(np.float64)
        return y * self.target_std + self.target_mean

    def repair(self, X):
        if self.repairer is None:
            return as_bits(X, self.dim)
        return self.repairer.repair(X)

    def is_feasible(self, X):
        if self.repairer is None:
            X = as_bits(X, self.dim)
            return np.ones(X.shape[:-1], dtype=bool) if X.ndim == 2 else np.bool_(True)
        return self.repairer.is_feasible(X)

    def with_embedding(self, e, instance_id: str | None = None) -> "NIR":
        """Same shared weights, scaler and repair operator; only the embedding changes."""
        return NIR(self.shared, e, self.dim, self.target_mean, self.target_std, self.repairer,
                   instance_id or self.instance_id, self.problem_class, parent_id=self.instance_id)

    def embedding_digest(self) -> str:
        return hashlib.sha256(self.embedding.tobytes()).hexdigest()[:16]

    def __repr__(self):
        return f"NIR({self.instance_id!r}, class={self.problem_class}, dim={self.dim}, n_obj={self.n_obj})"


def shared_digest(sw: M.SharedWeights) -> str:
    h = hashlib.sha256()
    for k in sorted(sw.params):
        h.update(k.encode())
        h.update(np.ascontiguousarray(sw.params[k]).tobytes())
    return h.hexdigest()[:16]
