"""Experiment records, report tables and objective-space scatter exports.

Result files are deterministic for a given configuration and seed; wall
times go to a separate timings file so results stay byte-comparable.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from papforge.portfolio import InstanceReference, PerformanceMatrix, Portfolio, evaluate_configs
from papforge.problems import instance_id
from papforge.problems.base import random_bits
from papforge.seeding import derive_seed

PAP_METHOD = "PAP"


class OutputLocked(RuntimeError):
    pass


class OutputLock:
    """Exclusive lock file inside an output directory."""

    NAME = ".papforge.lock"

    def __init__(self, out_dir):
        self.path = Path(out_dir) / self.NAME

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise OutputLocked(f"{self.path.parent} is in use by another papforge process ({self.path})") from None
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)
        return False


def digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:12]


def write_header(path, config_digest: str) -> None:
    """First line of a JSONL log: ties the file to its configuration."""
    with open(path, "a") as fh:
        fh.write(json.dumps({"event": "config", "config_digest": config_digest}) + "\n")


@dataclass
class ExperimentRecord:
    config: dict
    seed: int
    rows: list[dict] = field(default_factory=list)

    @property
    def config_digest(self) -> str:
        return digest(self.config)

    @property
    def run_id(self) -> str:
        return digest({"config": self.config, "seed": self.seed})

    def aggregates(self) -> dict:
        return aggregate(self.rows)

    def to_dict(self) -> dict:
        agg = [{"class": c, "dim": d, "method": m, **v} for (c, d, m), v in self.aggregates().items()]
        return {"run_id": self.run_id, "config_digest": self.config_digest, "config": self.config,
                "seed": self.seed, "rows": self.rows, "aggregates": agg}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentRecord":
        return cls(d["config"], d["seed"], list(d["rows"]))


def aggregate(rows) -> dict:
    """Mean and sample standard deviation per (class, dim, method)."""
    groups = defaultdict(list)
    for r in rows:
        groups[(r["class"], int(r["dim"]), r["method"])].append(float(r["normalized_hv"]))
    out = {}
    for k in sorted(groups, key=lambda k: (k[0], k[1], k[2] == PAP_METHOD, k[2])):
        v = np.array(groups[k])
        out[k] = {"mean": float(v.mean()), "std": float(v.std(ddof=1)) if len(v) > 1 else 0.0, "n": len(v)}
    return out


def evaluable_id(ev) -> str:
    """Row/matrix id; NIRs are prefixed so they never share entries with their source instance."""
    return instance_id(ev) if hasattr(ev, "split") else f"nir:{ev.instance_id}"


def evaluable_class(ev) -> str:
    """Problem class, prefixed with ``NIR:`` for neural representations."""
    return ev.problem_class if hasattr(ev, "split") else f"NIR:{ev.problem_class}"


def evaluate_pap(P: Portfolio, instances, max_eval: int, seed: int = 0, reference_samples: int = 100_000,
                 front_samples: int = 5000, record_path=None, timings_path=None, config: dict | None = None,
                 workers: int | None = 1) -> ExperimentRecord:
    """Run every member on every instance; rows hold member scores plus the portfolio score."""
    config = dict(config or {})
    config.setdefault("portfolio", P.to_dict())
    config.setdefault("max_eval", max_eval)
    config.setdefault("reference_samples", reference_samples)
    config.setdefault("front_samples", front_samples)
    rec = ExperimentRecord(config, seed)
    for path in (record_path, timings_path):
        if path:
            write_header(path, rec.config_digest)
    matrix = PerformanceMatrix(record_path)
    run_seed = derive_seed(seed, "member-runs")
    for inst in instances:
        iid = evaluable_id(inst)
        t0 = time.perf_counter()
        matrix.add_instance(iid, InstanceReference.build(inst, reference_samples, front_samples,
                                                         derive_seed(seed, "reference", iid)))
        vals = evaluate_configs(list(P), inst, iid, matrix, max_eval, run_seed, workers)
        base = {"instance": iid, "class": evaluable_class(inst), "dim": inst.dim}
        for c, v in zip(P, vals):
            rec.rows.append({**base, "method": c.label or c.key(), "normalized_hv": v})
        rec.rows.append({**base, "method": PAP_METHOD, "normalized_hv": max(vals)})
        if timings_path:
            with open(timings_path, "a") as fh:
                fh.write(json.dumps({"instance": iid, "wall_time": round(time.perf_counter() - t0, 6)}) + "\n")
    return rec


def rows_from_matrix(matrix: PerformanceMatrix, configs=None, dims: dict | None = None) -> list[dict]:
    """Rows for every matrix entry; ``dims`` maps instance id to dimension when ids do not encode it."""
    rows = []
    keys = None if configs is None else {c.key() for c in configs}
    for (k, iid), e in matrix.entries.items():
        if keys is not None and k not in keys:
            continue
        cls, dim = _class_dim(iid, dims)
        rows.append({"instance": iid, "class": cls, "dim": dim, "method": e.label or k,
                     "normalized_hv": matrix.value(k, iid)})
    return rows


def _class_dim(iid: str, dims) -> tuple[str, int]:
    parts = iid.split("-")
    if dims and iid in dims:
        return parts[0] if len(parts) > 2 else "NIR", int(dims[iid])
    for p in parts:
        if p.startswith("d") and p[1:].isdigit():
            return parts[0], int(p[1:])
    return "NIR", 0


def render_table(agg: dict) -> str:
    """Markdown table, one row per (class, dim), one column per method, cells mean±std."""
    methods = []
    for (_, _, m) in agg:
        if m not in methods:
            methods.append(m)
    if PAP_METHOD in methods:
        methods = [m for m in methods if m != PAP_METHOD] + [PAP_METHOD]
    cells = defaultdict(dict)
    for (c, d, m), v in agg.items():
        cells[(c, d)][m] = f"{v['mean']:.4f}±{v['std']:.4f}"
    lines = ["| class | dim | " + " | ".join(methods) + " |", "|---|---|" + "---|" * len(methods)]
    for (c, d) in sorted(cells):
        lines.append(f"| {c} | {d} | " + " | ".join(cells[(c, d)].get(m, "-") for m in methods) + " |")
    return "\n".join(lines) + "\n"


def scatter_samples(evaluable, n: int = 100_000, seed: int = 0, batch: int = 8192) -> np.ndarray:
    """Objective values of ``n`` random repaired solutions."""
    rng = np.random.default_rng(seed)
    out = []
    for s in range(0, n, batch):
        X = evaluable.repair(random_bits(rng, min(batch, n - s), evaluable.dim))
        out.append(np.asarray(evaluable.evaluate(X), dtype=np.float64))
    return np.concatenate(out) if out else np.zeros((0, evaluable.n_obj))


def write_scatter(path, F: np.ndarray, header: str = "") -> None:
    """Whitespace-separated x y [z] rows."""
    np.savetxt(path, np.asarray(F), fmt="%.10g", header=header, comments="# ")


def save_nir_set(out_dir, shared, nirs: dict, sources: dict, meta: dict | None = None) -> None:
    """Write NIRs as ``nirs.npz`` plus their source instances under ``instances/``."""
    from papforge.nir.checkpoint import save_shared
    from papforge.problems import save_instance

    out = Path(out_dir)
    (out / "instances").mkdir(parents=True, exist_ok=True)
    emb, info = {}, {}
    for nid, m in nirs.items():
        emb[nid] = {"e": m.embedding, "mean": m.target_mean, "std": m.target_std}
        src = instance_id(sources[nid])
        save_instance(sources[nid], out / "instances" / f"{src}.json")
        info[nid] = {"dim": m.dim, "source": src, "parent": m.parent_id}
    save_shared(out / "nirs.npz", shared, emb, {**(meta or {}), "nirs": info})


def load_nir_set(path) -> tuple[dict, dict]:
    """Inverse of :func:`save_nir_set`; returns ``(nirs, meta)`` with NIRs in file order."""
    from papforge.nir import NIR, load_shared
    from papforge.problems import load_instance

    path = Path(path)
    root = path if path.is_dir() else path.parent
    sw, emb, meta = load_shared(root / "nirs.npz")
    nirs = {}
    for nid, info in meta["nirs"].items():
        inst = load_instance(root / "instances" / f"{info['source']}.json")
        e = emb[nid]
        nirs[nid] = NIR(sw, e["e"], info["dim"], e["mean"], e["std"], inst, nid, parent_id=info.get("parent"))
    return nirs, meta
