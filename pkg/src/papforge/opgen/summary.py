"""Text summary of how each portfolio member performs on each training NIR."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass

import numpy as np

from papforge.portfolio import MissingEntry


def dense_ranks(values) -> np.ndarray:
    """Rank 1 for the highest value; equal values share a rank and no rank is skipped."""
    v = np.asarray(values, dtype=np.float64)
    levels = np.unique(-v)
    return np.searchsorted(levels, -v) + 1


@dataclass
class SolverBlock:
    index: int
    label: str
    description: str
    descriptor: dict
    assignment: dict
    hv: list[float]
    ranks: list[int]

    def rank_counts(self, cols=None) -> dict[int, int]:
        rs = self.ranks if cols is None else [self.ranks[j] for j in cols]
        return dict(sorted(Counter(rs).items()))


@dataclass
class PerformanceSummary:
    solvers: list[SolverBlock]
    nir_ids: list[str]
    dims: list[int]

    def by_dimension(self) -> dict[int, dict[int, dict[int, int]]]:
        out = {}
        for d in sorted(set(self.dims)):
            cols = [j for j, x in enumerate(self.dims) if x == d]
            out[d] = {s.index: s.rank_counts(cols) for s in self.solvers}
        return out

    def render(self) -> str:
        lines = ["Performance Summary of Solvers", ""]
        for s in self.solvers:
            lines.append(f"--- Solver {s.index} ---")
            lines.append(f"Label: {s.label}")
            lines.append(f"Description: {s.description}")
            lines.append("Descriptor:")
            lines.append("```json")
            lines.append(json.dumps(s.descriptor, sort_keys=True))
            lines.append("```")
            lines.append("Hyper-parameters:")
            lines.append("```json")
            lines.append(json.dumps(s.assignment, sort_keys=True))
            lines.append("```")
            lines.append("HV Performance across all NIRs:")
            for j, (h, r) in enumerate(zip(s.hv, s.ranks)):
                lines.append(f"  NIR {j} (dim={self.dims[j]}): HV={h:.6f}, Rank={r}")
            lines.append("Overall Rank Statistics:")
            for r, n in s.rank_counts().items():
                lines.append(f"  Rank {r}: {n} times")
            lines.append("")
        lines.append("Rank Statistics by Dimension")
        for d, per in self.by_dimension().items():
            lines.append(f"--- Dimension {d} ---")
            for i, counts in per.items():
                lines.append(f"  Solver {i}:")
                for r, n in counts.items():
                    lines.append(f"    Rank {r}: {n} times")
        return "\n".join(lines) + "\n"


def build_summary(P, nirs, matrix) -> PerformanceSummary:
    """``nirs`` is a list of (instance id, dimension) pairs; every pair must be in ``matrix``."""
    members = list(P)
    ids = [i for i, _ in nirs]
    dims = [int(d) for _, d in nirs]
    try:
        V = matrix.table(members, ids)
    except MissingEntry as exc:
        raise MissingEntry(f"performance matrix incomplete: {exc}") from None
    R = np.column_stack([dense_ranks(V[:, j]) for j in range(len(ids))]) if ids else np.zeros((len(members), 0))
    blocks = []
    for i, c in enumerate(members):
        desc = c.descriptor.to_dict()
        text = desc.pop("description")
        desc.pop("hyperparameters")
        blocks.append(SolverBlock(i, c.label, text, desc, c.values(), [float(x) for x in V[i]],
                                  [int(r) for r in R[i]]))
    return PerformanceSummary(blocks, ids, dims)
