"""Parallel algorithm portfolios: running members, scoring, and choosing K-subsets.

A portfolio's score on an instance is the best normalized hypervolume among
its members.  Scores are stored in a PerformanceMatrix keyed by
(configuration identity, instance id) so no member is ever run twice on the
same instance.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from papforge.metrics import (DegenerateReference, hypervolume, init_reference, normalized_performance,
                              pareto_filter, update_reference)
from papforge.moea import Configuration, RunBudget, run_moea
from papforge.problems.base import random_bits
from papforge.seeding import derive_seed


class MissingEntry(KeyError):
    pass


class Portfolio:
    def __init__(self, members):
        members = tuple(members)
        if not members:
            raise ValueError("a portfolio needs at least one member")
        keys = [m.key() for m in members]
        if len(set(keys)) != len(keys):
            raise ValueError("portfolio members must be pairwise distinct")
        self.members = members

    @property
    def K(self) -> int:
        return len(self.members)

    def keys(self) -> list[str]:
        return [m.key() for m in self.members]

    def to_dict(self) -> dict:
        return {"K": self.K, "members": [m.to_dict() for m in self.members]}

    @classmethod
    def from_dict(cls, d: dict) -> "Portfolio":
        return cls(Configuration.from_dict(m) for m in d["members"])

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return self.K


@dataclass
class InstanceReference:
    """Normalization data for one instance: reference point and random reference front."""

    ref: np.ndarray
    front: np.ndarray
    upper: np.ndarray
    initial_ref: np.ndarray = None

    def __post_init__(self):
        self.ref = np.asarray(self.ref, dtype=np.float64)
        self.front = np.asarray(self.front, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        if self.initial_ref is None:
            self.initial_ref = self.ref.copy()
        self._hv_ref = None

    @classmethod
    def build(cls, evaluable, point_samples: int = 100_000, front_samples: int = 5000, seed: int = 0):
        rng = np.random.default_rng(derive_seed(seed, "reference-front"))
        X = evaluable.repair(random_bits(rng, front_samples, evaluable.dim))
        F = np.asarray(evaluable.evaluate(X), dtype=np.float64)
        ref = F.min(axis=0)
        if point_samples > front_samples:
            ref = np.minimum(ref, init_reference(evaluable, point_samples, derive_seed(seed, "reference-point")))
        return cls(ref, pareto_filter(F), F.max(axis=0))

    def hv_ref(self) -> float:
        """Hypervolume of the reference front; cached until the reference point moves."""
        if self._hv_ref is None:
            self._hv_ref = hypervolume(self.front, self.ref)
        if not self._hv_ref > 0:
            raise DegenerateReference("reference front has zero hypervolume")
        return self._hv_ref

    def init_range(self) -> np.ndarray:
        """Per-objective [lo, hi] from construction time, handed to MOEAs."""
        return np.stack([self.initial_ref, np.maximum(self.upper, self.initial_ref)], axis=1)

    def widen(self, observed_min) -> bool:
        new = update_reference(self.ref, observed_min)
        changed = bool(np.any(new < self.ref))
        if changed:
            self.ref, self._hv_ref = new, None
        return changed

    def normalized(self, front) -> float:
        if front is None or len(front) == 0:
            return 0.0
        return normalized_performance(hypervolume(front, self.ref), self.hv_ref())

    def to_dict(self) -> dict:
        return {"ref": self.ref.tolist(), "initial_ref": self.initial_ref.tolist(), "front": self.front.tolist(),
                "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "InstanceReference":
        n = len(d["ref"])
        return cls(np.array(d["ref"]), np.array(d["front"]).reshape(-1, n), np.array(d["upper"]),
                   np.array(d["initial_ref"]))


@dataclass
class Entry:
    label: str
    front: np.ndarray | None
    failed: bool = False
    error: str = ""
    wall: float = 0.0


@dataclass
class MemberOutcome:
    front: np.ndarray | None
    observed_min: np.ndarray | None
    wall: float
    error: str = ""


def run_member(config: Configuration, evaluable, max_eval: int, init_range, seed: int) -> MemberOutcome:
    """Run one configuration; failures are captured rather than raised."""
    t0 = time.perf_counter()
    try:
        res = run_moea(config, evaluable, RunBudget(max_eval), init_range=init_range, seed=seed)
    except Exception as exc:  # a broken member scores 0, it does not abort the portfolio
        return MemberOutcome(None, None, time.perf_counter() - t0, f"{type(exc).__name__}: {exc}")
    return MemberOutcome(res.F, res.observed_min, time.perf_counter() - t0)


class PerformanceMatrix:
    """Normalized performance of configurations (rows) on instances (columns).

    Raw fronts are kept so that a widening reference point rescales a whole
    column consistently.  With ``record_path`` set, every recorded or rescaled
    entry is appended to a JSON-lines file.
    """

    def __init__(self, record_path: str | Path | None = None):
        self.configs: dict[str, Configuration] = {}
        self.refs: dict[str, InstanceReference] = {}
        self.entries: dict[tuple[str, str], Entry] = {}
        self._values: dict[tuple[str, str], float] = {}
        self.record_path = Path(record_path) if record_path else None

    # -- structure
    def add_instance(self, instance_id: str, reference: InstanceReference) -> None:
        if instance_id not in self.refs:
            self.refs[instance_id] = reference

    def drop_instance(self, instance_id: str) -> None:
        self.refs.pop(instance_id, None)
        for k in [k for k in self.entries if k[1] == instance_id]:
            del self.entries[k]
            self._values.pop(k, None)

    def has(self, config, instance_id: str) -> bool:
        return (_key(config), instance_id) in self.entries

    # -- values
    def value(self, config, instance_id: str) -> float:
        k = (_key(config), instance_id)
        if k not in self.entries:
            raise MissingEntry(k)
        if k not in self._values:
            e = self.entries[k]
            self._values[k] = 0.0 if e.failed else self.refs[instance_id].normalized(e.front)
        return self._values[k]

    def table(self, configs, instance_ids) -> np.ndarray:
        return np.array([[self.value(c, i) for i in instance_ids] for c in configs], dtype=np.float64)

    def record(self, config: Configuration, instance_id: str, outcome: MemberOutcome) -> float:
        key = config.key()
        self.configs.setdefault(key, config)
        ref = self.refs[instance_id]
        failed = outcome.front is None
        self.entries[(key, instance_id)] = Entry(config.label, outcome.front, failed, outcome.error, outcome.wall)
        self._values.pop((key, instance_id), None)
        if not failed and ref.widen(outcome.observed_min):
            stale = [k for k in self.entries if k[1] == instance_id and k != (key, instance_id)]
            for k in stale:
                self._values.pop(k, None)
            for k in stale:
                self._log(k, "rescale")
        self._log((key, instance_id), "record")
        return self.value(key, instance_id)

    def _log(self, k, event: str) -> None:
        if self.record_path is None:
            return
        e = self.entries[k]
        ref = self.refs[k[1]]
        raw = 0.0 if e.failed or e.front is None else hypervolume(e.front, ref.ref)
        try:
            hv_ref = ref.hv_ref()
        except DegenerateReference:
            hv_ref = 0.0
        rec = {"event": event, "config": e.label, "config_key": k[0], "instance": k[1], "raw_hv": raw,
               "hv_ref": hv_ref, "normalized": self.value(*k), "failed": e.failed, "wall_time": round(e.wall, 6)}
        if e.error:
            rec["error"] = e.error
        with open(self.record_path, "a") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    # -- persistence (no wall times: the snapshot is deterministic)
    def to_dict(self) -> dict:
        return {
            "instances": {i: r.to_dict() for i, r in self.refs.items()},
            "configs": {k: c.to_dict() for k, c in self.configs.items()},
            "entries": [{"config_key": k[0], "instance": k[1], "label": e.label, "failed": e.failed,
                         "error": e.error, "front": None if e.front is None else e.front.tolist(),
                         "normalized": self.value(*k)} for k, e in self.entries.items()],
        }

    @classmethod
    def from_dict(cls, d: dict, record_path=None) -> "PerformanceMatrix":
        m = cls(record_path)
        m.refs = {i: InstanceReference.from_dict(r) for i, r in d["instances"].items()}
        m.configs = {k: Configuration.from_dict(c) for k, c in d["configs"].items()}
        for e in d["entries"]:
            n = len(m.refs[e["instance"]].ref)
            front = None if e["front"] is None else np.array(e["front"], dtype=np.float64).reshape(-1, n)
            m.entries[(e["config_key"], e["instance"])] = Entry(e["label"], front, e["failed"], e.get("error", ""))
        return m


def _key(config) -> str:
    return config if isinstance(config, str) else config.key()


@dataclass
class PortfolioRun:
    values: list[float]
    performance: float
    fronts: list = field(default_factory=list)


def _run_job(args):
    return run_member(*args)


def evaluate_configs(configs, evaluable, instance_id: str, matrix: PerformanceMatrix, max_eval: int, seed: int,
                     workers: int | None = None) -> list[float]:
    """Fill missing matrix entries for ``configs`` on one instance, then return their values.

    Runs are seeded by (seed, configuration identity, instance id), so a
    configuration's score does not depend on which portfolio asked for it.
    """
    ref = matrix.refs[instance_id]
    todo = []
    seen = set()
    for c in configs:
        k = c.key()
        if not matrix.has(k, instance_id) and k not in seen:
            seen.add(k)
            todo.append(c)
    init_range = ref.init_range()
    jobs = [(c, evaluable, max_eval, init_range, derive_seed(seed, "run", c.key(), instance_id)) for c in todo]
    if workers is None:
        workers = os.cpu_count() or 1
    workers = max(1, min(workers, len(jobs)))
    if workers == 1:
        outcomes = [_run_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(workers) as pool:
            outcomes = list(pool.map(_run_job, jobs))
    # single aggregator: records and reference updates are applied in member order
    for c, out in zip(todo, outcomes):
        matrix.record(c, instance_id, out)
    return [matrix.value(c, instance_id) for c in configs]


def run_portfolio(P, evaluable, instance_id: str, matrix: PerformanceMatrix, max_eval: int = 10_000,
                  seed: int = 0, workers: int | None = None) -> PortfolioRun:
    members = list(P)
    vals = evaluate_configs(members, evaluable, instance_id, matrix, max_eval, seed, workers)
    fronts = [matrix.entries[(c.key(), instance_id)].front for c in members]
    return PortfolioRun(vals, pap_performance(vals), fronts)


def pap_performance(member_values) -> float:
    """Best member's normalized performance."""
    return float(np.max(member_values))


def subset_objective(values: np.ndarray, rows) -> float:
    return float(values[list(rows)].max(axis=0).sum())


def select_subset(values, K: int) -> tuple:
    """Row indices of the size-K subset maximizing the summed per-column maximum.

    Exhaustive; among equal objectives the lexicographically smallest index
    tuple wins.
    """
    V = np.asarray(values, dtype=np.float64)
    if V.ndim != 2:
        raise ValueError("values must be a (candidates, instances) matrix")
    if np.isnan(V).any():
        raise MissingEntry("matrix has missing entries")
    n = V.shape[0]
    if not 1 <= K <= n:
        raise ValueError(f"K must lie in [1, {n}]")
    best, best_val = None, -np.inf
    combos = list(combinations(range(n), K))
    chunk = 4096
    for s in range(0, len(combos), chunk):
        idx = np.array(combos[s:s + chunk])
        scores = V[idx].max(axis=1).sum(axis=1)
        j = int(np.argmax(scores))
        if scores[j] > best_val:
            best_val, best = float(scores[j]), tuple(int(i) for i in idx[j])
    return best


def select_portfolio(matrix: PerformanceMatrix, candidates, instance_ids, K: int) -> Portfolio:
    """Best size-K portfolio among ``candidates`` on the given matrix columns."""
    candidates = list(candidates)
    if len(candidates) < K:
        raise ValueError(f"need at least K={K} candidates, got {len(candidates)}")
    rows = select_subset(matrix.table(candidates, list(instance_ids)), K)
    return Portfolio(candidates[i] for i in rows)


def aas_bounds(values) -> dict:
    """Oracle, worst and random selection bounds for a (members, instances) block."""
    V = np.asarray(values, dtype=np.float64)
    oracle, worst, rand = V.max(axis=0), V.min(axis=0), V.mean(axis=0)
    return {"oracle": oracle, "worst": worst, "random": rand,
            "mean": {"oracle": float(oracle.mean()), "worst": float(worst.mean()), "random": float(rand.mean())}}
