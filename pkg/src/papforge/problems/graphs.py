"""Directed graphs for influence problems: loader and bundled synthetic stand-ins."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import networkx as nx
import numpy as np


@dataclass(eq=False)
class DiGraph:
    """Edge-array digraph; ``prob[e]`` is the firing probability of edge ``src[e] -> dst[e]``."""

    n_nodes: int
    src: np.ndarray
    dst: np.ndarray
    prob: np.ndarray
    name: str = "graph"

    def __post_init__(self):
        self.src = np.asarray(self.src, dtype=np.int64)
        self.dst = np.asarray(self.dst, dtype=np.int64)
        self.prob = np.asarray(self.prob, dtype=np.float64)
        if not (len(self.src) == len(self.dst) == len(self.prob)):
            raise ValueError("edge arrays must have equal length")
        if len(self.src) and (self.src.max() >= self.n_nodes or self.dst.max() >= self.n_nodes):
            raise ValueError("edge endpoint outside node range")

    def out_degree(self) -> np.ndarray:
        return np.bincount(self.src, minlength=self.n_nodes)

    def in_degree(self) -> np.ndarray:
        return np.bincount(self.dst, minlength=self.n_nodes)

    def degree(self) -> np.ndarray:
        return self.out_degree() + self.in_degree()

    def to_dict(self) -> dict:
        return {"name": self.name, "n_nodes": self.n_nodes,
                "edges": np.stack([self.src, self.dst], axis=1).tolist(), "prob": self.prob.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DiGraph":
        e = np.array(d["edges"], dtype=np.int64).reshape(-1, 2)
        return cls(d["n_nodes"], e[:, 0], e[:, 1], np.array(d["prob"]), d.get("name", "graph"))


def weighted_cascade(n_nodes: int, src, dst) -> np.ndarray:
    indeg = np.bincount(dst, minlength=n_nodes)
    return 1.0 / indeg[dst]


def load_edge_list(path: str | Path, name: str | None = None) -> DiGraph:
    """Read ``u v [p]`` lines; missing probabilities default to 1/in-degree(v).

    Node ids are remapped to ``0..n-1`` in order of first appearance sorted by id.
    Lines starting with ``#`` are ignored.
    """
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append(line.split())
    if not rows:
        raise ValueError(f"{path}: empty edge list")
    ids = sorted({r[0] for r in rows} | {r[1] for r in rows}, key=_node_key)
    index = {k: i for i, k in enumerate(ids)}
    src = np.array([index[r[0]] for r in rows])
    dst = np.array([index[r[1]] for r in rows])
    if all(len(r) >= 3 for r in rows):
        prob = np.array([float(r[2]) for r in rows])
    elif any(len(r) >= 3 for r in rows):
        raise ValueError(f"{path}: probability column present on some lines only")
    else:
        prob = weighted_cascade(len(ids), src, dst)
    return DiGraph(len(ids), src, dst, prob, name or Path(path).stem)


def _node_key(s: str):
    return (0, int(s), "") if s.lstrip("-").isdigit() else (1, 0, s)


def preferential_attachment(n_nodes: int, m: int, seed: int, name: str) -> DiGraph:
    g = nx.barabasi_albert_graph(n_nodes, m, seed=seed)
    und = np.array(sorted(g.edges()), dtype=np.int64)
    src = np.concatenate([und[:, 0], und[:, 1]])
    dst = np.concatenate([und[:, 1], und[:, 0]])
    return DiGraph(n_nodes, src, dst, weighted_cascade(n_nodes, src, dst), name)


# Synthetic stand-ins for the Wiki / Facebook / Epinions networks.
GRAPH_POOL = {
    "wiki-like": dict(n_nodes=1000, m=3, seed=7),
    "facebook-like": dict(n_nodes=600, m=5, seed=11),
    "epinions-like": dict(n_nodes=1500, m=2, seed=13),
}
TRAIN_GRAPH = "wiki-like"

_cache: dict[str, DiGraph] = {}


def bundled_graph(name: str) -> DiGraph:
    if name not in GRAPH_POOL:
        raise KeyError(f"unknown bundled graph {name!r}; choose from {sorted(GRAPH_POOL)}")
    if name not in _cache:
        _cache[name] = preferential_attachment(name=name, **GRAPH_POOL[name])
    return _cache[name]
