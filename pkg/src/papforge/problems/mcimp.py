"""Bi-objective complementary influence maximization.

Propagation is a simplified two-opinion cascade evaluated on pre-sampled
randomness, so ``evaluate`` is a pure function of the instance:

* each simulation fixes which edges are live (edge ``u -> v`` live with
  probability ``p(u, v)``) and a uniform threshold per node and opinion;
* a node that hears opinion O from a newly adopting in-neighbour adopts it if
  its threshold is below ``q[O|none]`` (holds nothing) or ``q[O|other]``
  (holds the other opinion); a node that heard O but declined reconsiders it
  whenever its own state changes;
* rounds continue until no node adopts anything; f1 is the mean number of
  B-holders (seeds included) over simulations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from papforge.problems.base import as_bits, batched
from papforge.problems.graphs import GRAPH_POOL, TRAIN_GRAPH, DiGraph, bundled_graph

Q_CONFIGS = ((0.5, 0.75, 0.5, 0.75), (0.5, 0.25, 0.5, 0.25))
N_SIM = 100
LAMBDA_RANGE = (0.8, 1.2)


@dataclass(eq=False)
class MCIMPInstance:
    graph: DiGraph
    candidates: np.ndarray  # node ids, length dim
    seed_set_a: np.ndarray
    q: tuple  # (q_A|none, q_A|B, q_B|none, q_B|A)
    costs: np.ndarray
    k: int
    n_sim: int = N_SIM
    sim_seed: int = 0
    split: str = "train"
    seed: int = 0
    problem_class: str = field(default="MCIMP", init=False)

    def __post_init__(self):
        self.candidates = np.asarray(self.candidates, dtype=np.int64)
        self.seed_set_a = np.asarray(self.seed_set_a, dtype=np.int64)
        self.costs = np.asarray(self.costs, dtype=np.float64)
        self.q = tuple(float(v) for v in self.q)
        if len(set(self.candidates.tolist())) != len(self.candidates):
            raise ValueError("candidate nodes must be distinct")
        if self.candidates.size and (self.candidates.min() < 0 or self.candidates.max() >= self.graph.n_nodes):
            raise ValueError("candidate node not in graph")
        if not 1 <= self.k <= self.dim:
            raise ValueError("k must lie in [1, dim]")
        self._presample()

    @property
    def dim(self) -> int:
        return self.candidates.shape[0]

    n_obj = 2

    def _presample(self) -> None:
        g, S = self.graph, self.n_sim
        V = g.n_nodes
        rng = np.random.default_rng(self.sim_seed)
        live = rng.random((S, len(g.src))) < g.prob[None, :]
        self._theta_a = rng.random((S, V)).reshape(-1, 1)
        self._theta_b = rng.random((S, V)).reshape(-1, 1)
        sims, edges = np.nonzero(live)
        rows = g.dst[edges] + sims * V
        cols = g.src[edges] + sims * V
        # (S*V) x (S*V) block-diagonal: row v receives from its live in-edges
        self._prop = sp.csr_matrix((np.ones(len(rows), dtype=np.float32), (rows, cols)),
                                   shape=(S * V, S * V))

    def _cascade(self, X: np.ndarray) -> np.ndarray:
        """Mean B-holder count for each row of X."""
        S, V, B = self.n_sim, self.graph.n_nodes, X.shape[0]
        qa0, qab, qb0, qba = self.q
        has_a = np.zeros((S * V, B), dtype=bool)
        has_b = np.zeros((S * V, B), dtype=bool)
        offs = (np.arange(S) * V)[:, None]
        if self.seed_set_a.size:
            has_a[(offs + self.seed_set_a[None, :]).ravel(), :] = True
        for b in range(B):
            seeds = self.candidates[X[b].astype(bool)]
            if seeds.size:
                has_b[(offs + seeds[None, :]).ravel(), b] = True
        heard_a = has_a.copy()
        heard_b = has_b.copy()
        new_a, new_b = has_a.copy(), has_b.copy()
        while new_a.any() or new_b.any():
            if new_a.any():
                heard_a |= (self._prop @ new_a.astype(np.float32)) > 0
            if new_b.any():
                heard_b |= (self._prop @ new_b.astype(np.float32)) > 0
            thr_a = np.where(has_b, qab, qa0)
            thr_b = np.where(has_a, qba, qb0)
            new_a = heard_a & ~has_a & (self._theta_a < thr_a)
            new_b = heard_b & ~has_b & (self._theta_b < thr_b)
            has_a |= new_a
            has_b |= new_b
        return has_b.reshape(S, V, B).sum(axis=1).mean(axis=0)

    def simulate_influence(self, x) -> float:
        x = as_bits(x, self.dim)
        return float(self._cascade(x[None, :])[0])

    @batched
    def evaluate(self, X):
        out = np.empty((X.shape[0], 2))
        for s in range(0, X.shape[0], 64):
            out[s:s + 64, 0] = self._cascade(X[s:s + 64])
        out[:, 1] = -(X @ self.costs)
        return out

    @batched
    def repair(self, X):
        """Keep only the first k selected seeds in index order."""
        keep = np.cumsum(X, axis=1) <= self.k
        return (X * keep).astype(np.uint8)

    @batched
    def is_feasible(self, X):
        return X.sum(axis=1) <= self.k

    def to_dict(self) -> dict:
        return {"graph": self.graph.to_dict(), "candidates": self.candidates.tolist(),
                "seed_set_a": self.seed_set_a.tolist(), "q": list(self.q),
                "costs": self.costs.tolist(), "k": self.k, "n_sim": self.n_sim,
                "sim_seed": self.sim_seed}

    @classmethod
    def from_dict(cls, d: dict, split: str, seed: int) -> "MCIMPInstance":
        return cls(graph=DiGraph.from_dict(d["graph"]), candidates=np.array(d["candidates"]),
                   seed_set_a=np.array(d["seed_set_a"]), q=tuple(d["q"]), costs=np.array(d["costs"]),
                   k=d["k"], n_sim=d["n_sim"], sim_seed=d["sim_seed"], split=split, seed=seed)


def top_degree_candidates(graph: DiGraph, dim: int) -> np.ndarray:
    deg = graph.out_degree()
    # highest out-degree first, ties by smaller node id
    order = np.lexsort((np.arange(graph.n_nodes), -deg))
    return order[:dim]


def generate(dim: int, split: str, rng: np.random.Generator, seed: int,
             graph: DiGraph | None = None, n_sim: int = N_SIM) -> MCIMPInstance:
    if graph is None:
        name = TRAIN_GRAPH if split == "train" else sorted(GRAPH_POOL)[int(rng.integers(len(GRAPH_POOL)))]
        graph = bundled_graph(name)
    if dim > graph.n_nodes:
        raise ValueError(f"dim {dim} exceeds graph size {graph.n_nodes}")
    candidates = top_degree_candidates(graph, dim)
    others = np.setdiff1d(np.arange(graph.n_nodes), candidates)
    n_a = min(50, math.ceil(0.05 * graph.n_nodes), len(others))
    seed_set_a = np.sort(rng.choice(others, size=n_a, replace=False))
    q = Q_CONFIGS[int(rng.integers(len(Q_CONFIGS)))]
    lam = rng.uniform(*LAMBDA_RANGE, size=dim)
    costs = lam * graph.out_degree()[candidates]
    return MCIMPInstance(graph=graph, candidates=candidates, seed_set_a=seed_set_a, q=q, costs=costs,
                         k=math.ceil(dim / 4), n_sim=n_sim, sim_seed=int(rng.integers(0, 2**62)),
                         split=split, seed=seed)
